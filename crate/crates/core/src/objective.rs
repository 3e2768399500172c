//! Multi-scale two-view objective and its analytic gradient with respect to
//! both relative-depth fields.
//!
//! Per pyramid level the fields are block means of the finest fields, turned
//! into metric depth with the per-view median, projected into the other view,
//! and used to resample the other view's image and depth. The reverse pass
//! mirrors the forward pass step by step; the adaptive smoothness weights are
//! treated as constants.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{
    project_pixels, project_pixels_with_jacobian, relative_pose, CameraIntrinsics, Projector, RigidPose,
};
use crate::grid::{check_same_dims, Image, Raster, ScalarGrid};
use crate::imaging::{
    bilinear_sample, bilinear_sample_backward, downsample2x, downsample2x_adjoint, sobel_adjoint,
    sobel_gradients, ssim_map, ssim_map_backward, BilinearCell,
};
use crate::losses::{
    adaptive_weights, consistency_term, edge_weights, photometric_loss, smoothness_with_edges, LossWeights,
};
use crate::scale::{scale_transform, DepthMap, MedianDepth};

/// Everything known about one view of a scene.
#[derive(Clone, Debug)]
pub struct ViewData {
    pub image: Image,
    pub intrinsics: CameraIntrinsics,
    /// Camera-to-world pose.
    pub world_pose: RigidPose,
    pub median: MedianDepth,
    pub gt_depth: Option<DepthMap>,
}

/// Two views of a static scene.
#[derive(Clone, Debug)]
pub struct ScenePair {
    views: [ViewData; 2],
}

impl ScenePair {
    pub fn new(first: ViewData, second: ViewData) -> Result<Self> {
        check_same_dims("scene pair images", first.image.dims(), second.image.dims())?;
        if first.image.channels() != second.image.channels() {
            return Err(Error::invalid("scene pair images must have the same channel count"));
        }
        for view in [&first, &second] {
            if let Some(gt) = &view.gt_depth {
                check_same_dims("ground-truth depth", gt.dims(), view.image.dims())?;
            }
        }
        Ok(Self { views: [first, second] })
    }

    pub fn view(&self, k: usize) -> &ViewData {
        &self.views[k]
    }

    pub fn views(&self) -> &[ViewData; 2] {
        &self.views
    }

    pub fn dims(&self) -> (usize, usize) {
        self.views[0].image.dims()
    }

    pub fn medians(&self) -> [MedianDepth; 2] {
        [self.views[0].median, self.views[1].median]
    }

    /// Same scene with the view roles exchanged.
    pub fn swapped(&self) -> Self {
        Self { views: [self.views[1].clone(), self.views[0].clone()] }
    }

    /// Transform from view `k`'s camera frame into the other view's.
    pub fn pose_to_other(&self, k: usize) -> RigidPose {
        relative_pose(&self.views[k].world_pose, &self.views[1 - k].world_pose)
    }
}

/// Loss values of one pyramid level, per view.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleTerms {
    pub photometric: [f64; 2],
    pub geometric: [f64; 2],
    pub ssim: [f64; 2],
    pub smoothness: [f64; 2],
    pub valid_counts: [usize; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Term {
    Photometric,
    GeometricConsistency,
    Ssim,
    Smoothness,
}

impl Term {
    pub const ALL: [Term; 4] = [Term::Photometric, Term::GeometricConsistency, Term::Ssim, Term::Smoothness];

    pub fn name(self) -> &'static str {
        match self {
            Term::Photometric => "ph",
            Term::GeometricConsistency => "gc",
            Term::Ssim => "ssim",
            Term::Smoothness => "smooth",
        }
    }
}

impl ScaleTerms {
    pub fn per_view(&self, term: Term) -> [f64; 2] {
        match term {
            Term::Photometric => self.photometric,
            Term::GeometricConsistency => self.geometric,
            Term::Ssim => self.ssim,
            Term::Smoothness => self.smoothness,
        }
    }

    /// Both views summed.
    pub fn value(&self, term: Term) -> f64 {
        let [a, b] = self.per_view(term);
        a + b
    }

    pub fn weighted(&self, weights: &LossWeights, scale_index: usize) -> f64 {
        weights.lambda_ph * self.value(Term::Photometric)
            + weights.lambda_gc * self.value(Term::GeometricConsistency)
            + weights.lambda_ssim * self.value(Term::Ssim)
            + weights.smooth_weight(scale_index) * self.value(Term::Smoothness)
    }
}

/// Per-scale, per-view loss terms and the weighted multi-scale total.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub scales: Vec<ScaleTerms>,
    pub total: f64,
}

impl LossBreakdown {
    /// Weighted sum over scales recomputed from the stored terms.
    pub fn weighted_total(&self, weights: &LossWeights) -> f64 {
        self.scales.iter().enumerate().map(|(s, t)| t.weighted(weights, s)).sum()
    }

    /// A term summed over views and scales.
    pub fn term(&self, term: Term) -> f64 {
        self.scales.iter().map(|t| t.value(term)).sum()
    }

    pub const CSV_HEADER: &'static str = "scale,term,view,value,valid_count";

    /// Long-format CSV: one row per (scale, term, view), scales labelled by
    /// their downsampling factor and views numbered from 1, followed by a
    /// `total` row with empty scale/view/count fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for (s, terms) in self.scales.iter().enumerate() {
            let factor = 1u32 << s;
            for term in Term::ALL {
                for (view, value) in terms.per_view(term).iter().enumerate() {
                    let _ = writeln!(out, "{factor},{},{},{value},{}", term.name(), view + 1, terms.valid_counts[view]);
                }
            }
        }
        let _ = writeln!(out, ",total,,{},", self.total);
        out
    }
}

/// Per-level adaptive weights `[view 1, view 2]`.
pub type AlphaMaps = Vec<[ScalarGrid; 2]>;

/// Result of one objective evaluation.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub breakdown: LossBreakdown,
    /// Gradient of the total with respect to each finest-level field.
    pub gradients: Option<[Vec<f64>; 2]>,
    pub alphas: AlphaMaps,
}

struct Level {
    images: [Image; 2],
    intrinsics: [CameraIntrinsics; 2],
    edges: [(ScalarGrid, ScalarGrid); 2],
}

/// The total loss for a fixed scene and weight set; image pyramids and
/// edge weights are computed once.
pub struct Objective {
    weights: LossWeights,
    medians: [MedianDepth; 2],
    poses: [RigidPose; 2],
    levels: Vec<Level>,
    dims: (usize, usize),
}

impl Objective {
    pub fn new(pair: &ScenePair, weights: &LossWeights) -> Result<Self> {
        weights.validate()?;
        let (h, w) = pair.dims();
        let factor = 1usize << (weights.num_scales - 1);
        if h % factor != 0 || w % factor != 0 {
            return Err(Error::invalid(format!(
                "{h}x{w} raster is not divisible by {factor} for {} scales",
                weights.num_scales
            )));
        }
        if h / factor < 3 || w / factor < 3 {
            return Err(Error::invalid(format!(
                "coarsest level {}x{} is below 3x3; use fewer scales",
                h / factor,
                w / factor
            )));
        }
        let mut levels = Vec::with_capacity(weights.num_scales);
        let mut images = [pair.view(0).image.clone(), pair.view(1).image.clone()];
        let mut intrinsics = [pair.view(0).intrinsics, pair.view(1).intrinsics];
        for s in 0..weights.num_scales {
            if s > 0 {
                images = [downsample2x(&images[0])?, downsample2x(&images[1])?];
                intrinsics = [intrinsics[0].downsampled(), intrinsics[1].downsampled()];
            }
            let edges = [edge_weights(&images[0])?, edge_weights(&images[1])?];
            levels.push(Level { images: images.clone(), intrinsics, edges });
        }
        Ok(Self {
            weights: *weights,
            medians: pair.medians(),
            poses: [pair.pose_to_other(0), pair.pose_to_other(1)],
            levels,
            dims: (h, w),
        })
    }

    pub fn weights(&self) -> &LossWeights {
        &self.weights
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    fn field_pyramid(&self, fields: [&ScalarGrid; 2]) -> Result<Vec<[ScalarGrid; 2]>> {
        for f in fields {
            check_same_dims("relative depth field", f.dims(), self.dims)?;
        }
        let mut out: Vec<[ScalarGrid; 2]> = Vec::with_capacity(self.levels.len());
        out.push([fields[0].clone(), fields[1].clone()]);
        for s in 1..self.levels.len() {
            let prev = &out[s - 1];
            let next = [downsample2x(&prev[0])?, downsample2x(&prev[1])?];
            out.push(next);
        }
        Ok(out)
    }

    /// Evaluates the loss; `alphas` overrides the adaptive weights (one entry
    /// per level), `with_gradient` runs the reverse pass.
    pub fn evaluate(
        &self,
        fields: [&ScalarGrid; 2],
        alphas: Option<&AlphaMaps>,
        with_gradient: bool,
    ) -> Result<Evaluation> {
        if let Some(a) = alphas {
            if a.len() != self.levels.len() {
                return Err(Error::invalid("adaptive weight override must cover every scale"));
            }
        }
        let wts = &self.weights;
        let field_levels = self.field_pyramid(fields)?;
        let mut scales = Vec::with_capacity(self.levels.len());
        let mut used_alphas = Vec::with_capacity(self.levels.len());
        let mut level_grads: Vec<[Vec<f64>; 2]> = Vec::new();

        for (s, (level, level_fields)) in self.levels.iter().zip(&field_levels).enumerate() {
            let tag = |e: Error, view: usize| match e {
                Error::NoOverlap { .. } => Error::NoOverlap { scale: s, view },
                other => other,
            };
            let depths = [
                scale_transform(&level_fields[0], self.medians[0])?,
                scale_transform(&level_fields[1], self.medians[1])?,
            ];
            let (h, w) = level_fields[0].dims();
            let n = h * w;
            let mut terms = ScaleTerms {
                photometric: [0.0; 2],
                geometric: [0.0; 2],
                ssim: [0.0; 2],
                smoothness: [0.0; 2],
                valid_counts: [0; 2],
            };
            let mut alpha_pair: Vec<ScalarGrid> = Vec::with_capacity(2);
            let mut g_depth = [vec![0.0; n], vec![0.0; n]];

            for k in 0..2 {
                let o = 1 - k;
                let target = &level.images[k];
                let (proj, jac) =
                    project_pixels_with_jacobian(&depths[k], &level.intrinsics[k], &level.intrinsics[o], &self.poses[k])?;
                let (rec, mask) = bilinear_sample(&level.images[o], &proj)?;
                let (ph, residual) = photometric_loss(target, &rec, &mask).map_err(|e| tag(e, k))?;
                let n_valid = mask.count();
                let inv_n = 1.0 / n_valid as f64;
                let (sampled, _) = bilinear_sample(depths[o].grid(), &proj)?;
                let sim = ssim_map(target, &rec)?;

                let (mut ssim_sum, mut gc_sum) = (0.0, 0.0);
                for i in 0..n {
                    if mask.is_valid(i) {
                        ssim_sum += 1.0 - sim.as_slice()[i];
                        gc_sum += consistency_term(proj.projected_depth[i], sampled.as_slice()[i]);
                    }
                }
                let alpha = match alphas {
                    Some(a) => {
                        check_same_dims("adaptive weights", a[s][k].dims(), (h, w))?;
                        a[s][k].clone()
                    }
                    None => adaptive_weights(&residual, wts.c, wts.sigma_mode)?,
                };
                let (ex, ey) = &level.edges[k];
                terms.photometric[k] = ph;
                terms.ssim[k] = ssim_sum * inv_n;
                terms.geometric[k] = gc_sum * inv_n;
                terms.smoothness[k] = smoothness_with_edges(&level_fields[k], ex, ey, &alpha)?;
                terms.valid_counts[k] = n_valid;

                if with_gradient {
                    let c = target.channels();
                    let (t, r) = (target.as_slice(), rec.as_slice());
                    let mut g_rec = vec![0.0; n * c];
                    if wts.lambda_ph != 0.0 {
                        let scale = wts.lambda_ph * inv_n / c as f64;
                        for i in (0..n).filter(|&i| mask.is_valid(i)) {
                            for ch in 0..c {
                                g_rec[i * c + ch] = -scale * signum0(t[i * c + ch] - r[i * c + ch]);
                            }
                        }
                    }
                    if wts.lambda_ssim != 0.0 {
                        let up: Vec<f64> =
                            (0..n).map(|i| if mask.is_valid(i) { -wts.lambda_ssim * inv_n } else { 0.0 }).collect();
                        let g_ssim = ssim_map_backward(target, &rec, &up)?;
                        // Masked-out reconstructions are constant zeros.
                        for i in (0..n).filter(|&i| mask.is_valid(i)) {
                            for ch in 0..c {
                                g_rec[i * c + ch] += g_ssim[i * c + ch];
                            }
                        }
                    }
                    let image_grad = bilinear_sample_backward(&level.images[o], &proj, &g_rec)?;
                    let (mut du, mut dv) = (image_grad.du, image_grad.dv);

                    let mut g_z = vec![0.0; n];
                    if wts.lambda_gc != 0.0 {
                        let mut g_sampled = vec![0.0; n];
                        let scale = wts.lambda_gc * inv_n;
                        for i in (0..n).filter(|&i| mask.is_valid(i)) {
                            let (z, sd) = (proj.projected_depth[i], sampled.as_slice()[i]);
                            let diff = z - sd;
                            let sum = z + sd;
                            let sg = signum0(diff);
                            let q = diff.abs() / (sum * sum);
                            g_z[i] = scale * (sg / sum - q);
                            g_sampled[i] = scale * (-sg / sum - q);
                        }
                        let depth_grad = bilinear_sample_backward(depths[o].grid(), &proj, &g_sampled)?;
                        for i in 0..n {
                            du[i] += depth_grad.du[i];
                            dv[i] += depth_grad.dv[i];
                            g_depth[o][i] += depth_grad.source[i];
                        }
                    }
                    for i in 0..n {
                        g_depth[k][i] += du[i] * jac.du_ddepth[i] + dv[i] * jac.dv_ddepth[i] + g_z[i] * jac.dz_ddepth[i];
                    }
                }
                alpha_pair.push(alpha);
            }

            if with_gradient {
                let lambda_smooth = wts.smooth_weight(s);
                let mut grads: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
                for k in 0..2 {
                    let depth = depths[k].as_slice();
                    let mut g: Vec<f64> = g_depth[k].iter().zip(depth).map(|(gd, d)| gd * d).collect();
                    if lambda_smooth != 0.0 {
                        let (dx, dy) = sobel_gradients(&level_fields[k])?;
                        let (ex, ey) = &level.edges[k];
                        let alpha = alpha_pair[k].as_slice();
                        let scale = lambda_smooth / n as f64;
                        let gx: Vec<f64> = (0..n)
                            .map(|i| scale * alpha[i] * ex.as_slice()[i] * signum0(dx.as_slice()[i]))
                            .collect();
                        let gy: Vec<f64> = (0..n)
                            .map(|i| scale * alpha[i] * ey.as_slice()[i] * signum0(dy.as_slice()[i]))
                            .collect();
                        let smooth = sobel_adjoint(h, w, &gx, &gy)?;
                        for (gi, si) in g.iter_mut().zip(smooth) {
                            *gi += si;
                        }
                    }
                    grads[k] = g;
                }
                level_grads.push(grads);
            }

            let second = alpha_pair.pop().expect("two views");
            let first = alpha_pair.pop().expect("two views");
            used_alphas.push([first, second]);
            scales.push(terms);
        }

        let mut breakdown = LossBreakdown { scales, total: 0.0 };
        breakdown.total = breakdown.weighted_total(wts);

        let gradients = with_gradient.then(|| {
            // Horner-style accumulation from the coarsest level down.
            let mut acc: Option<[Vec<f64>; 2]> = None;
            for (s, grads) in level_grads.into_iter().enumerate().rev() {
                let (h, w) = field_levels[s][0].dims();
                acc = Some(match acc {
                    None => grads,
                    Some(coarse) => {
                        let (ch, cw) = (h / 2, w / 2);
                        let mut out = grads;
                        for k in 0..2 {
                            let up = downsample2x_adjoint(&coarse[k], ch, cw);
                            for (o, u) in out[k].iter_mut().zip(up) {
                                *o += u;
                            }
                        }
                        out
                    }
                });
            }
            acc.expect("at least one scale")
        });

        Ok(Evaluation { breakdown, gradients, alphas: used_alphas })
    }

    /// For each level, the bilinear cell that the pixel containing finest
    /// entry `index` of `view` projects into (`None` when masked out).
    pub fn projection_cells(&self, fields: [&ScalarGrid; 2], view: usize, index: usize) -> Result<Vec<Option<usize>>> {
        let pyramid = self.field_pyramid(fields)?;
        let (_, w) = self.dims;
        let (row, col) = (index / w, index % w);
        let mut cells = Vec::with_capacity(self.levels.len());
        for (s, (level, lf)) in self.levels.iter().zip(&pyramid).enumerate() {
            let (r, c) = (row >> s, col >> s);
            let depth = self.medians[view].value() * lf[view].get(r, c).exp();
            let projector = Projector::new(level.intrinsics[view], level.intrinsics[1 - view], self.poses[view]);
            let p = projector.project(c as f64, r as f64, depth);
            let (lh, lw) = lf[view].dims();
            let cell = if p.in_front() { BilinearCell::locate(p.u, p.v, lh, lw).map(|cell| cell.i00) } else { None };
            cells.push(cell);
        }
        Ok(cells)
    }

    /// Signs of every absolute-value argument in the weighted terms, plus the
    /// validity masks, over all levels and both views. The loss is smooth
    /// between two field states with equal signatures and equal projection
    /// cells.
    pub fn kink_signature(&self, fields: [&ScalarGrid; 2]) -> Result<Vec<i8>> {
        let wts = &self.weights;
        let sign = |x: f64| signum0(x) as i8;
        let mut out = Vec::new();
        for (s, (level, lf)) in self.levels.iter().zip(&self.field_pyramid(fields)?).enumerate() {
            let depths = [scale_transform(&lf[0], self.medians[0])?, scale_transform(&lf[1], self.medians[1])?];
            for k in 0..2 {
                let o = 1 - k;
                let proj = project_pixels(depths[k].grid(), &level.intrinsics[k], &level.intrinsics[o], &self.poses[k])?;
                let (rec, mask) = bilinear_sample(&level.images[o], &proj)?;
                let (sampled, _) = bilinear_sample(depths[o].grid(), &proj)?;
                let c = rec.channels();
                let (t, r) = (level.images[k].as_slice(), rec.as_slice());
                for i in 0..proj.projected_depth.len() {
                    out.push(mask.is_valid(i) as i8);
                    if !mask.is_valid(i) {
                        continue;
                    }
                    if wts.lambda_ph != 0.0 {
                        out.extend((0..c).map(|ch| sign(t[i * c + ch] - r[i * c + ch])));
                    }
                    if wts.lambda_gc != 0.0 {
                        out.push(sign(proj.projected_depth[i] - sampled.as_slice()[i]));
                    }
                }
                if wts.smooth_weight(s) != 0.0 {
                    let (dx, dy) = sobel_gradients(&lf[k])?;
                    out.extend(dx.as_slice().iter().chain(dy.as_slice()).map(|&g| sign(g)));
                }
            }
        }
        Ok(out)
    }
}

#[inline]
fn signum0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Full multi-scale loss breakdown for the given relative-depth fields.
pub fn total_loss(pair: &ScenePair, field_1: &ScalarGrid, field_2: &ScalarGrid, weights: &LossWeights) -> Result<LossBreakdown> {
    let objective = Objective::new(pair, weights)?;
    Ok(objective.evaluate([field_1, field_2], None, false)?.breakdown)
}

/// Breakdown and gradients in one pass.
pub fn total_loss_and_gradient(
    pair: &ScenePair,
    field_1: &ScalarGrid,
    field_2: &ScalarGrid,
    weights: &LossWeights,
) -> Result<(LossBreakdown, ScalarGrid, ScalarGrid)> {
    let objective = Objective::new(pair, weights)?;
    let eval = objective.evaluate([field_1, field_2], None, true)?;
    let [g1, g2] = eval.gradients.expect("gradient requested");
    let (h, w) = objective.dims();
    Ok((eval.breakdown, ScalarGrid::new(h, w, g1)?, ScalarGrid::new(h, w, g2)?))
}

/// Gradient of the total loss with respect to both fields.
pub fn total_loss_gradient(
    pair: &ScenePair,
    field_1: &ScalarGrid,
    field_2: &ScalarGrid,
    weights: &LossWeights,
) -> Result<(ScalarGrid, ScalarGrid)> {
    total_loss_and_gradient(pair, field_1, field_2, weights).map(|(_, g1, g2)| (g1, g2))
}
