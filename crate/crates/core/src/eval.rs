//! Depth-error metrics with median alignment.

use crate::error::{Error, Result};
use crate::grid::{check_same_dims, Raster, ScalarGrid};
use crate::scale::{median_depth, DepthMap};

/// Optional depth range restricting which ground-truth pixels are scored.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalOptions {
    pub min_depth: Option<f64>,
    pub max_depth: Option<f64>,
}

impl EvalOptions {
    fn keeps(&self, gt: f64) -> bool {
        self.min_depth.is_none_or(|m| gt >= m) && self.max_depth.is_none_or(|m| gt <= m)
    }
}

/// Scales `pred` so its lower median equals that of `gt`.
pub fn median_align(pred: &DepthMap, gt: &DepthMap) -> Result<DepthMap> {
    check_same_dims("prediction", pred.dims(), gt.dims())?;
    let scale = median_depth(gt.as_slice())?.value() / median_depth(pred.as_slice())?.value();
    DepthMap::new(pred.map(|p| p * scale)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rms: f64,
    /// Root mean squared difference of base-10 logarithms.
    pub rms_log: f64,
    pub count: usize,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "abs_rel,sq_rel,rms,rms_log10,count";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.abs_rel, self.sq_rel, self.rms, self.rms_log, self.count)
    }

    pub fn table(&self) -> String {
        format!(
            "{:>10} {:>10} {:>10} {:>10} {:>8}\n{:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>8}\n",
            "Abs Rel", "Sq Rel", "RMS", "RMS(log10)", "pixels", self.abs_rel, self.sq_rel, self.rms, self.rms_log, self.count
        )
    }
}

pub fn compute_metrics(pred: &DepthMap, gt: &DepthMap) -> Result<MetricReport> {
    compute_metrics_with(pred, gt, &EvalOptions::default())
}

pub fn compute_metrics_with(pred: &DepthMap, gt: &DepthMap, options: &EvalOptions) -> Result<MetricReport> {
    check_same_dims("prediction", pred.dims(), gt.dims())?;
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    let mut count = 0usize;
    for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
        if !options.keeps(g) {
            continue;
        }
        let d = p - g;
        abs_rel += d.abs() / g;
        sq_rel += d * d / g;
        sq += d * d;
        let dl = p.log10() - g.log10();
        sq_log += dl * dl;
        count += 1;
    }
    if count == 0 {
        return Err(Error::InsufficientData("no ground-truth pixel inside the evaluation range".into()));
    }
    let n = count as f64;
    Ok(MetricReport { abs_rel: abs_rel / n, sq_rel: sq_rel / n, rms: (sq / n).sqrt(), rms_log: (sq_log / n).sqrt(), count })
}

/// Convenience for raw grids: validates positivity first.
pub fn evaluate_grids(pred: &ScalarGrid, gt: &ScalarGrid, align: bool) -> Result<MetricReport> {
    check_same_dims("prediction", pred.dims(), gt.dims())?;
    let pred = DepthMap::new(pred.clone())?;
    let gt = DepthMap::new(gt.clone())?;
    let pred = if align { median_align(&pred, &gt)? } else { pred };
    compute_metrics(&pred, &gt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn depth(h: usize, w: usize, v: Vec<f64>) -> DepthMap {
        DepthMap::new(ScalarGrid::new(h, w, v).unwrap()).unwrap()
    }

    #[test]
    fn single_pixel_example() {
        let m = compute_metrics(&depth(1, 1, vec![2.0]), &depth(1, 1, vec![1.0])).unwrap();
        assert_eq!((m.abs_rel, m.sq_rel, m.rms), (1.0, 1.0, 1.0));
        assert_eq!(m.rms_log, 2f64.log10());
        assert_eq!(m.count, 1);
    }

    #[test]
    fn identical_maps_score_zero() {
        let g = depth(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let m = compute_metrics(&g, &g).unwrap();
        assert_eq!((m.abs_rel, m.sq_rel, m.rms, m.rms_log), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn alignment_examples() {
        let pred = depth(1, 3, vec![1.0, 2.0, 3.0]);
        let gt = depth(1, 3, vec![2.0, 8.0, 10.0]);
        assert_eq!(median_align(&pred, &gt).unwrap().as_slice(), &[4.0, 8.0, 12.0]);

        let gt = depth(1, 4, vec![1.5, 2.5, 0.7, 9.0]);
        let doubled = depth(1, 4, gt.as_slice().iter().map(|g| 2.0 * g).collect());
        assert_eq!(median_align(&doubled, &gt).unwrap(), gt);
        assert_eq!(compute_metrics(&doubled, &gt).unwrap().abs_rel, 1.0);
    }

    #[test]
    fn dimension_mismatch_names_both_shapes() {
        let err = compute_metrics(&depth(1, 2, vec![1.0, 1.0]), &depth(2, 1, vec![1.0, 1.0])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("1x2") && msg.contains("2x1"), "{msg}");
    }

    #[test]
    fn range_mask_excludes_pixels() {
        let pred = depth(1, 3, vec![1.0, 5.0, 100.0]);
        let gt = depth(1, 3, vec![1.0, 5.0, 50.0]);
        let opts = EvalOptions { min_depth: None, max_depth: Some(10.0) };
        let m = compute_metrics_with(&pred, &gt, &opts).unwrap();
        assert_eq!((m.abs_rel, m.count), (0.0, 2));
        let none = EvalOptions { min_depth: Some(1000.0), max_depth: None };
        assert!(compute_metrics_with(&pred, &gt, &none).is_err());
    }

    #[test]
    fn non_positive_grid_rejected() {
        let bad = ScalarGrid::new(1, 2, vec![1.0, 0.0]).unwrap();
        let good = ScalarGrid::filled(1, 2, 1.0).unwrap();
        assert!(matches!(evaluate_grids(&bad, &good, true), Err(Error::InvalidInput(_))));
    }
}
