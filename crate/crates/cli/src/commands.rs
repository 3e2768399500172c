//! The four subcommands as library functions, so tests drive them in-process.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use realdepth_core::eval::evaluate_grids;
use realdepth_core::io::{load_pfm, load_ppm, save_pfm, save_ppm};
use realdepth_core::optim::{finite_diff_check_against, optimize};
use realdepth_core::scale::view_median_depth;
use realdepth_core::synth::{cameras_to_text, parse_cameras};
use realdepth_core::{
    compute_metrics, median_align, DepthMap, GradCheckReport, MedianDepth, MetricReport, Objective, Raster,
    ScalarGrid, SceneDescriptor, ScenePair, SparsePointCloud, ViewData,
};

use crate::{CliError, ExperimentConfig};

/// Fault-injection hook applied to the analytic gradient before comparison.
pub type GradientHook = dyn Fn(&mut [Vec<f64>; 2]);

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Renders a descriptor into `out_dir`; returns the written paths.
pub fn cmd_synth(descriptor: &Path, out_dir: &Path, seed: Option<u64>) -> Result<Vec<PathBuf>, CliError> {
    let mut desc = SceneDescriptor::parse(&read_text(descriptor)?)?;
    if let Some(seed) = seed {
        desc.seed = seed;
    }
    let rendered = desc.build()?.render()?;
    create_dir(out_dir)?;
    let paths: Vec<PathBuf> = ["view1.ppm", "view2.ppm", "gt1.pfm", "gt2.pfm", "sparse.txt", "cameras.txt"]
        .iter()
        .map(|name| out_dir.join(name))
        .collect();
    for k in 0..2 {
        save_ppm(&rendered.images[k], &paths[k])?;
        save_pfm(rendered.depths[k].grid(), &paths[2 + k])?;
    }
    write_text(&paths[4], &rendered.cloud.to_text())?;
    write_text(&paths[5], &cameras_to_text(&rendered.cameras))?;
    Ok(paths)
}

/// Loads a two-view problem from a `synth` output directory or renders it
/// from a descriptor file. Ground truth is attached when available.
pub fn load_scene(path: &Path) -> Result<ScenePair, CliError> {
    if path.is_file() {
        let desc = SceneDescriptor::parse(&read_text(path)?)?;
        return Ok(desc.build()?.render()?.scene_pair()?);
    }
    let cameras = parse_cameras(&read_text(&path.join("cameras.txt"))?)?;
    let cloud = SparsePointCloud::parse(&read_text(&path.join("sparse.txt"))?)?;
    let mut views = Vec::with_capacity(2);
    for (k, cam) in cameras.iter().enumerate() {
        let image = load_ppm(path.join(format!("view{}.ppm", k + 1)))?;
        let dims = (image.height(), image.width());
        let gt_path = path.join(format!("gt{}.pfm", k + 1));
        let gt_depth = if gt_path.exists() { Some(DepthMap::new(load_pfm(&gt_path)?)?) } else { None };
        let median = view_median_depth(&cloud, &cam.intrinsics, &cam.world_pose, dims)?;
        views.push(ViewData { image, intrinsics: cam.intrinsics, world_pose: cam.world_pose, median, gt_depth });
    }
    let second = views.pop().expect("two views");
    let first = views.pop().expect("two views");
    Ok(ScenePair::new(first, second)?)
}

#[derive(Clone, Debug)]
pub struct OptimizeSummary {
    pub medians: [MedianDepth; 2],
    pub final_total: f64,
    /// Median-aligned metrics per view, when ground truth is present.
    pub metrics: Option<[MetricReport; 2]>,
}

/// Runs the optimizer and writes `trajectory.csv`, `depth{1,2}.pfm`,
/// `rel{1,2}.pfm` and, with ground truth, `metrics.csv`.
pub fn cmd_optimize(config: &ExperimentConfig) -> Result<OptimizeSummary, CliError> {
    let pair = load_scene(&config.scene)?;
    create_dir(&config.output_dir)?;
    let out = |name: &str| config.output_dir.join(name);
    let outcome = match optimize(&pair, &config.optim) {
        Ok(outcome) => outcome,
        Err(failure) => {
            // Keep the partial trajectory for diagnosis.
            write_text(&out("trajectory.csv"), &failure.trajectory.to_csv())?;
            return Err(failure.error.into());
        }
    };
    write_text(&out("trajectory.csv"), &outcome.trajectory.to_csv())?;
    let medians = pair.medians();
    let mut metrics = Vec::new();
    for k in 0..2 {
        let depth = realdepth_core::scale_transform(&outcome.fields[k], medians[k])?;
        save_pfm(&outcome.fields[k], out(&format!("rel{}.pfm", k + 1)))?;
        save_pfm(depth.grid(), out(&format!("depth{}.pfm", k + 1)))?;
        if let Some(gt) = &pair.view(k).gt_depth {
            metrics.push(compute_metrics(&median_align(&depth, gt)?, gt)?);
        }
    }
    let metrics: Option<[MetricReport; 2]> = metrics.try_into().ok();
    if let Some(m) = &metrics {
        let mut csv = format!("view,{}\n", MetricReport::CSV_HEADER);
        for (k, r) in m.iter().enumerate() {
            csv.push_str(&format!("{},{}\n", k + 1, r.csv_row()));
        }
        write_text(&out("metrics.csv"), &csv)?;
    }
    let final_total = outcome.trajectory.records.last().map_or(f64::NAN, |r| r.breakdown.total);
    Ok(OptimizeSummary { medians, final_total, metrics })
}

pub fn cmd_gradcheck(config: &ExperimentConfig) -> Result<GradCheckReport, CliError> {
    cmd_gradcheck_with(config, None)
}

/// Gradient check at seeded random fields. Writes `gradcheck.txt`; entries
/// straddling a pixel-lattice line are reported but not judged.
pub fn cmd_gradcheck_with(config: &ExperimentConfig, hook: Option<&GradientHook>) -> Result<GradCheckReport, CliError> {
    let pair = load_scene(&config.scene)?;
    let settings = config.gradcheck;
    let (h, w) = pair.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(config.optim.seed);
    let a = settings.field_amplitude;
    let mut field = || {
        ScalarGrid::from_fn(h, w, |_, _| if a > 0.0 { rng.random_range(-a..a) } else { 0.0 })
    };
    let fields = [field()?, field()?];
    let objective = Objective::new(&pair, &config.optim.weights)?;
    let base = objective.evaluate([&fields[0], &fields[1]], None, true)?;
    let mut analytic = base.gradients.expect("gradient requested");
    if let Some(hook) = hook {
        hook(&mut analytic);
    }
    let report = finite_diff_check_against(
        &objective,
        [&fields[0], &fields[1]],
        &base.alphas,
        &analytic,
        settings.step,
        settings.samples,
        config.optim.seed,
    )?;
    create_dir(&config.output_dir)?;
    write_text(&config.output_dir.join("gradcheck.txt"), &report.summary(settings.threshold))?;
    if report.passes(settings.threshold) {
        Ok(report)
    } else {
        Err(CliError::GradcheckFailed { report: Box::new(report), threshold: settings.threshold })
    }
}

/// Metrics of a predicted depth PFM against a ground-truth PFM.
pub fn cmd_eval(pred: &Path, gt: &Path, align: bool) -> Result<MetricReport, CliError> {
    let pred = load_pfm(pred)?;
    let gt = load_pfm(gt)?;
    Ok(evaluate_grids(&pred, &gt, align)?)
}
