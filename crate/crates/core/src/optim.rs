//! Direct optimization of the two relative-depth fields and the
//! finite-difference gradient checker.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Raster, ScalarGrid};
use crate::losses::LossWeights;
use crate::objective::{AlphaMaps, LossBreakdown, Objective, ScenePair, Term};

/// Polynomial decay `initial·(1 − iteration/max)^0.9`.
pub fn lr_schedule(iteration: usize, max_iterations: usize, initial_lr: f64) -> Result<f64> {
    if max_iterations == 0 || iteration > max_iterations {
        return Err(Error::invalid(format!(
            "iteration {iteration} outside schedule range 0..={max_iterations}"
        )));
    }
    Ok(initial_lr * (1.0 - iteration as f64 / max_iterations as f64).powf(0.9))
}

/// Adam moments for one field.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update of `field` along `-gradient`.
pub fn adam_step(state: &mut AdamState, field: &ScalarGrid, gradient: &[f64], lr: f64) -> Result<ScalarGrid> {
    if gradient.len() != field.len_pixels() || state.m.len() != field.len_pixels() {
        return Err(Error::invalid(format!(
            "gradient ({}) and Adam state ({}) must match the {}x{} field",
            gradient.len(),
            state.m.len(),
            field.height(),
            field.width()
        )));
    }
    let next_step = state.step + 1;
    if let Some(i) = gradient.iter().position(|g| !g.is_finite()) {
        return Err(Error::Diverged {
            iteration: next_step as usize,
            reason: format!("non-finite gradient at row {}, col {}", i / field.width(), i % field.width()),
        });
    }
    state.step = next_step;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    let mut out = field.as_slice().to_vec();
    for (i, (x, &g)) in out.iter_mut().zip(gradient).enumerate() {
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        *x -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    ScalarGrid::new(field.height(), field.width(), out).map_err(|e| Error::Diverged {
        iteration: state.step as usize,
        reason: e.to_string(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub max_iterations: usize,
    pub initial_lr: f64,
    pub weights: LossWeights,
    /// Seeds the gradient-check sampling; optimization itself starts from
    /// the deterministic zero field.
    pub seed: u64,
    pub record_every: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self { max_iterations: 2000, initial_lr: 2e-4, weights: LossWeights::default(), seed: 0, record_every: 20 }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::invalid(format!("initial_lr must be positive, got {}", self.initial_lr)));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every must be at least 1"));
        }
        self.weights.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub iteration: usize,
    pub lr: f64,
    pub breakdown: LossBreakdown,
}

/// Loss history, one record per `record_every` steps plus the final state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    pub fn csv_header(num_scales: usize) -> String {
        let mut out = String::from("iteration,lr");
        for s in 0..num_scales {
            for term in Term::ALL {
                let _ = write!(out, ",{}_s{}", term.name(), 1u32 << s);
            }
        }
        out.push_str(",total");
        out
    }

    /// Header plus one row per record; each term is summed over both views.
    pub fn to_csv(&self) -> String {
        let scales = self.records.first().map_or(0, |r| r.breakdown.scales.len());
        let mut out = Self::csv_header(scales);
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{},{}", r.iteration, r.lr);
            for terms in &r.breakdown.scales {
                for term in Term::ALL {
                    let _ = write!(out, ",{}", terms.value(term));
                }
            }
            let _ = writeln!(out, ",{}", r.breakdown.total);
        }
        out
    }

    pub fn totals(&self) -> Vec<(usize, f64)> {
        self.records.iter().map(|r| (r.iteration, r.breakdown.total)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct OptimOutcome {
    pub fields: [ScalarGrid; 2],
    pub trajectory: Trajectory,
}

/// An optimization that stopped early, with the history up to the failure.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct OptimFailure {
    #[source]
    pub error: Error,
    pub trajectory: Trajectory,
}

/// Largest field magnitude before `exp` overflows in the scale transform.
const MAX_LOG_DEPTH: f64 = 700.0;

/// Optimizes both fields from zero (depth ≡ μ).
pub fn optimize(pair: &ScenePair, config: &OptimConfig) -> std::result::Result<OptimOutcome, OptimFailure> {
    let (h, w) = pair.dims();
    optimize_from(pair, config, [ScalarGrid::zeros(h, w), ScalarGrid::zeros(h, w)])
}

/// Optimizes both fields from the given starting point.
pub fn optimize_from(
    pair: &ScenePair,
    config: &OptimConfig,
    init: [ScalarGrid; 2],
) -> std::result::Result<OptimOutcome, OptimFailure> {
    let mut trajectory = Trajectory::default();
    let fail = |error: Error, trajectory: Trajectory| OptimFailure { error, trajectory };
    if let Err(e) = config.validate() {
        return Err(fail(e, trajectory));
    }
    let objective = match Objective::new(pair, &config.weights) {
        Ok(o) => o,
        Err(e) => return Err(fail(e, trajectory)),
    };
    let (h, w) = objective.dims();
    let mut fields = init;
    let mut states = [AdamState::new(h * w), AdamState::new(h * w)];
    let max = config.max_iterations;

    for iteration in 0..=max {
        if let Some(i) = fields.iter().flat_map(|f| f.as_slice()).position(|r| r.abs() > MAX_LOG_DEPTH) {
            let reason = format!("relative depth entry {i} left the representable range");
            return Err(fail(Error::Diverged { iteration, reason }, trajectory));
        }
        let last = iteration == max;
        let eval = match objective.evaluate([&fields[0], &fields[1]], None, !last) {
            Ok(e) => e,
            Err(e) => return Err(fail(e, trajectory)),
        };
        if !eval.breakdown.total.is_finite() {
            let reason = format!("loss is {}", eval.breakdown.total);
            return Err(fail(Error::Diverged { iteration, reason }, trajectory));
        }
        let lr = lr_schedule(iteration, max, config.initial_lr).expect("iteration within schedule");
        if iteration % config.record_every == 0 || last {
            trajectory.records.push(TrajectoryRecord { iteration, lr, breakdown: eval.breakdown });
        }
        if last {
            break;
        }
        let grads = eval.gradients.expect("gradient requested");
        for k in 0..2 {
            match adam_step(&mut states[k], &fields[k], &grads[k], lr) {
                Ok(next) => fields[k] = next,
                Err(Error::Diverged { reason, .. }) => return Err(fail(Error::Diverged { iteration, reason }, trajectory)),
                Err(e) => return Err(fail(e, trajectory)),
            }
        }
    }
    Ok(OptimOutcome { fields, trajectory })
}

/// One checked field entry.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckEntry {
    pub view: usize,
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// `|a − n| / max(|a|, |n|, 1e-10)`.
    pub rel_error: f64,
    /// The perturbation moved the entry's projection across a lattice line
    /// (or the validity boundary) at some scale, so the loss is not smooth
    /// over the stencil.
    pub straddles: bool,
    /// Some absolute-value argument changed sign over the stencil.
    pub crosses_kink: bool,
}

impl GradCheckEntry {
    /// The loss is not differentiable somewhere on the stencil.
    pub fn is_flagged(&self) -> bool {
        self.straddles || self.crosses_kink
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub step: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    fn smooth_entries(&self) -> impl Iterator<Item = &GradCheckEntry> {
        self.entries.iter().filter(|e| !e.is_flagged())
    }

    /// Largest relative error over unflagged entries.
    pub fn max_rel_error(&self) -> f64 {
        self.smooth_entries().map(|e| e.rel_error).fold(0.0, f64::max)
    }

    pub fn mean_rel_error(&self) -> f64 {
        let n = self.smooth_entries().count();
        if n == 0 {
            return 0.0;
        }
        self.smooth_entries().map(|e| e.rel_error).sum::<f64>() / n as f64
    }

    pub fn flagged_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_flagged()).count()
    }

    pub fn straddling_count(&self) -> usize {
        self.entries.iter().filter(|e| e.straddles).count()
    }

    pub fn kink_count(&self) -> usize {
        self.entries.iter().filter(|e| e.crosses_kink).count()
    }

    /// Unflagged entries at or above `threshold`.
    pub fn offending(&self, threshold: f64) -> Vec<&GradCheckEntry> {
        self.smooth_entries().filter(|e| !(e.rel_error < threshold)).collect()
    }

    /// Fraction of unflagged entries below `threshold`.
    pub fn pass_fraction(&self, threshold: f64) -> f64 {
        let n = self.smooth_entries().count();
        if n == 0 {
            return 1.0;
        }
        (n - self.offending(threshold).len()) as f64 / n as f64
    }

    pub fn passes(&self, threshold: f64) -> bool {
        self.offending(threshold).is_empty()
    }

    pub fn summary(&self, threshold: f64) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "entries checked   {}", self.entries.len());
        let _ = writeln!(out, "lattice-straddling (excluded) {}", self.straddling_count());
        let _ = writeln!(out, "kink-crossing (excluded)      {}", self.kink_count());
        let _ = writeln!(out, "max rel error     {:.3e}", self.max_rel_error());
        let _ = writeln!(out, "mean rel error    {:.3e}", self.mean_rel_error());
        let _ = writeln!(out, "threshold         {threshold:.1e}");
        let offending = self.offending(threshold);
        if offending.is_empty() {
            out.push_str("result            pass\n");
        } else {
            out.push_str("result            FAIL\n");
            out.push_str("view,row,col,analytic,numeric,rel_error\n");
            for e in offending {
                let _ = writeln!(out, "{},{},{},{:e},{:e},{:e}", e.view + 1, e.row, e.col, e.analytic, e.numeric, e.rel_error);
            }
        }
        out
    }
}

/// Compares analytic gradients with central differences of the total loss
/// on a seeded random subset of field entries (all entries when
/// `sample_count` covers both fields). Adaptive weights are held at their
/// base-point values, matching the detached gradient.
pub fn finite_diff_check(
    pair: &ScenePair,
    fields: [&ScalarGrid; 2],
    weights: &LossWeights,
    step: f64,
    sample_count: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let objective = Objective::new(pair, weights)?;
    let base = objective.evaluate(fields, None, true)?;
    let analytic = base.gradients.expect("gradient requested");
    finite_diff_check_against(&objective, fields, &base.alphas, &analytic, step, sample_count, seed)
}

/// Finite-difference check of an externally supplied gradient.
pub fn finite_diff_check_against(
    objective: &Objective,
    fields: [&ScalarGrid; 2],
    alphas: &AlphaMaps,
    analytic: &[Vec<f64>; 2],
    step: f64,
    sample_count: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {step}")));
    }
    let (h, w) = objective.dims();
    let n = h * w;
    for g in analytic {
        if g.len() != n {
            return Err(Error::invalid("analytic gradient does not match field size"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<usize> = if sample_count >= 2 * n {
        (0..2 * n).collect()
    } else {
        sample(&mut rng, 2 * n, sample_count).into_vec()
    };
    picks.sort_unstable();

    let mut entries = Vec::with_capacity(picks.len());
    for flat in picks {
        let (view, index) = (flat / n, flat % n);
        let perturbed = |delta: f64| -> Result<ScalarGrid> {
            let mut values = fields[view].as_slice().to_vec();
            values[index] += delta;
            ScalarGrid::new(h, w, values)
        };
        let plus = perturbed(step)?;
        let minus = perturbed(-step)?;
        fn with<'a>(fields: [&'a ScalarGrid; 2], view: usize, f: &'a ScalarGrid) -> [&'a ScalarGrid; 2] {
            if view == 0 {
                [f, fields[1]]
            } else {
                [fields[0], f]
            }
        }
        let lp = objective.evaluate(with(fields, view, &plus), Some(alphas), false)?.breakdown.total;
        let lm = objective.evaluate(with(fields, view, &minus), Some(alphas), false)?.breakdown.total;
        let numeric = (lp - lm) / (2.0 * step);
        let a = analytic[view][index];
        let rel_error = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-10);
        let straddles = objective.projection_cells(with(fields, view, &plus), view, index)?
            != objective.projection_cells(with(fields, view, &minus), view, index)?;
        let crosses_kink = objective.kink_signature(with(fields, view, &plus))?
            != objective.kink_signature(with(fields, view, &minus))?;
        entries.push(GradCheckEntry {
            view,
            row: index / w,
            col: index % w,
            analytic: a,
            numeric,
            rel_error,
            straddles,
            crosses_kink,
        });
    }
    Ok(GradCheckReport { step, entries })
}
