//! Individual loss terms: photometric L1, SSIM dissimilarity, adaptive-weight
//! edge-aware smoothness and normalized geometric consistency.
//!
//! Masked terms average over valid pixels only. The combined multi-scale
//! objective and its gradient live in [`crate::objective`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ProjectionMap;
use crate::grid::{check_same_dims, Image, Raster, ScalarGrid, ValidityMask};
use crate::imaging::{bilinear_sample, sobel_gradients, ssim_map};
use crate::scale::DepthMap;

/// How the global residual `σ` enters the adaptive smoothness weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// `σ = 1 / mean(residual)`, so `α = exp(−c·r·mean(r))`.
    #[default]
    Literal,
    /// `σ = mean(residual)`, so `α = exp(−c·r / mean(r))`.
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_ph: f64,
    pub lambda_gc: f64,
    pub lambda_ssim: f64,
    /// Smoothness weight at full resolution; scale `s` uses `base / s`.
    pub lambda_smooth_base: f64,
    /// Adaptive-weight scale factor.
    pub c: f64,
    pub num_scales: usize,
    pub sigma_mode: SigmaMode,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_ph: 0.15,
            lambda_gc: 0.1,
            lambda_ssim: 0.85,
            lambda_smooth_base: 0.01,
            c: 5.0,
            num_scales: 4,
            sigma_mode: SigmaMode::Literal,
        }
    }
}

impl LossWeights {
    /// All term weights zero, remaining settings default.
    pub fn zero() -> Self {
        Self { lambda_ph: 0.0, lambda_gc: 0.0, lambda_ssim: 0.0, lambda_smooth_base: 0.0, ..Self::default() }
    }

    pub fn with_scales(self, num_scales: usize) -> Self {
        Self { num_scales, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("lambda_ph", self.lambda_ph),
            ("lambda_gc", self.lambda_gc),
            ("lambda_ssim", self.lambda_ssim),
            ("lambda_smooth_base", self.lambda_smooth_base),
        ];
        for (name, v) in named {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be a finite non-negative weight, got {v}")));
            }
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::invalid(format!("adaptive scale factor c must be positive, got {}", self.c)));
        }
        if !(1..=4).contains(&self.num_scales) {
            return Err(Error::invalid(format!("num_scales must be in [1, 4], got {}", self.num_scales)));
        }
        Ok(())
    }

    /// Downsampling factor `s = 2^scale_index`.
    pub fn scale_factor(scale_index: usize) -> f64 {
        (1u32 << scale_index) as f64
    }

    pub fn smooth_weight(&self, scale_index: usize) -> f64 {
        self.lambda_smooth_base / Self::scale_factor(scale_index)
    }

    pub fn is_zero(&self) -> bool {
        self.lambda_ph == 0.0 && self.lambda_gc == 0.0 && self.lambda_ssim == 0.0 && self.lambda_smooth_base == 0.0
    }
}

fn check_images(what: &str, a: &Image, b: &Image, mask: &ValidityMask) -> Result<()> {
    check_same_dims(what, a.dims(), b.dims())?;
    check_same_dims(what, a.dims(), (mask.height(), mask.width()))?;
    if a.channels() != b.channels() {
        return Err(Error::invalid(format!("{what}: channel mismatch {} vs {}", a.channels(), b.channels())));
    }
    Ok(())
}

fn valid_count(mask: &ValidityMask) -> Result<usize> {
    match mask.count() {
        0 => Err(Error::NoOverlap { scale: 0, view: 0 }),
        n => Ok(n),
    }
}

/// Mean over valid pixels of the channel-averaged absolute difference, and
/// the masked per-pixel residual.
pub fn photometric_loss(target: &Image, reconstructed: &Image, mask: &ValidityMask) -> Result<(f64, ScalarGrid)> {
    check_images("photometric loss", target, reconstructed, mask)?;
    let n = valid_count(mask)?;
    let c = target.channels();
    let (t, r) = (target.as_slice(), reconstructed.as_slice());
    let mut residual = vec![0.0; target.len_pixels()];
    let mut sum = 0.0;
    for (i, res) in residual.iter_mut().enumerate() {
        if !mask.is_valid(i) {
            continue;
        }
        let mut acc = 0.0;
        for ch in 0..c {
            acc += (t[i * c + ch] - r[i * c + ch]).abs();
        }
        *res = acc / c as f64;
        sum += *res;
    }
    let grid = ScalarGrid::new(target.height(), target.width(), residual)?;
    Ok((sum / n as f64, grid))
}

/// Mean over valid pixels of `1 − SSIM(target, reconstructed)` for one view.
pub fn ssim_dissimilarity(target: &Image, reconstructed: &Image, mask: &ValidityMask) -> Result<f64> {
    check_images("ssim loss", target, reconstructed, mask)?;
    let n = valid_count(mask)?;
    let map = ssim_map(target, reconstructed)?;
    let sum: f64 = map
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(i, _)| mask.is_valid(*i))
        .map(|(_, s)| 1.0 - s)
        .sum();
    Ok(sum / n as f64)
}

/// Two-view SSIM loss: the per-view dissimilarities summed.
pub fn ssim_loss(
    a: &Image,
    a_rec: &Image,
    b: &Image,
    b_rec: &Image,
    mask_a: &ValidityMask,
    mask_b: &ValidityMask,
) -> Result<f64> {
    let la = ssim_dissimilarity(a, a_rec, mask_a).map_err(|e| tag_view(e, 0))?;
    let lb = ssim_dissimilarity(b, b_rec, mask_b).map_err(|e| tag_view(e, 1))?;
    Ok(la + lb)
}

fn tag_view(err: Error, view: usize) -> Error {
    match err {
        Error::NoOverlap { scale, .. } => Error::NoOverlap { scale, view },
        other => other,
    }
}

/// Per-pixel smoothness regulation weights from a photometric residual map.
///
/// An all-zero residual yields `α ≡ 1`.
pub fn adaptive_weights(residual: &ScalarGrid, c: f64, mode: SigmaMode) -> Result<ScalarGrid> {
    if let Some(v) = residual.as_slice().iter().find(|&&v| v < 0.0) {
        return Err(Error::invalid(format!("residual entries must be non-negative, found {v}")));
    }
    let mean = residual.mean();
    if mean == 0.0 {
        return ScalarGrid::filled(residual.height(), residual.width(), 1.0);
    }
    match mode {
        SigmaMode::Literal => residual.map(|r| (-c * r * mean).exp()),
        SigmaMode::Mean => residual.map(|r| (-c * r / mean).exp()),
    }
}

/// Edge-aware attenuation `exp(−|∂I|)` from Sobel gradients of the
/// channel-averaged image.
pub fn edge_weights(image: &Image) -> Result<(ScalarGrid, ScalarGrid)> {
    let (gx, gy) = sobel_gradients(&image.channel_mean())?;
    Ok((gx.map(|g| (-g.abs()).exp())?, gy.map(|g| (-g.abs()).exp())?))
}

/// Mean over all pixels of `α·(|∂x D|·e^{−|∂x I|} + |∂y D|·e^{−|∂y I|})` with
/// Sobel derivatives.
pub fn smoothness_loss(relative: &ScalarGrid, image: &Image, alpha: &ScalarGrid) -> Result<f64> {
    check_same_dims("smoothness loss", relative.dims(), image.dims())?;
    check_same_dims("smoothness loss", relative.dims(), alpha.dims())?;
    let (ex, ey) = edge_weights(image)?;
    smoothness_with_edges(relative, &ex, &ey, alpha)
}

pub(crate) fn smoothness_with_edges(
    relative: &ScalarGrid,
    ex: &ScalarGrid,
    ey: &ScalarGrid,
    alpha: &ScalarGrid,
) -> Result<f64> {
    let (dx, dy) = sobel_gradients(relative)?;
    let mut sum = 0.0;
    for i in 0..relative.len_pixels() {
        let a = alpha.as_slice()[i];
        sum += a * (dx.as_slice()[i].abs() * ex.as_slice()[i] + dy.as_slice()[i].abs() * ey.as_slice()[i]);
    }
    Ok(sum / relative.len_pixels() as f64)
}

/// Normalized symmetric difference `|a − b| / (a + b)`.
#[inline]
pub fn consistency_term(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a + b)
}

/// Geometric consistency for one direction: projected depth against the other
/// view's depth sampled at the projected location, averaged over `mask`.
pub fn geometric_consistency_view(proj: &ProjectionMap, depth_other: &DepthMap, mask: &ValidityMask) -> Result<f64> {
    check_same_dims("geometric consistency", proj.dims(), (mask.height(), mask.width()))?;
    let n = valid_count(mask)?;
    let (sampled, _) = bilinear_sample(depth_other.grid(), proj)?;
    let mut sum = 0.0;
    for (i, &s) in sampled.as_slice().iter().enumerate() {
        if mask.is_valid(i) {
            sum += consistency_term(proj.projected_depth[i], s);
        }
    }
    Ok(sum / n as f64)
}

/// Symmetric geometric consistency: both projection directions summed.
pub fn geometric_consistency_loss(
    proj_ab: &ProjectionMap,
    proj_ba: &ProjectionMap,
    depth_a: &DepthMap,
    depth_b: &DepthMap,
    mask_a: &ValidityMask,
    mask_b: &ValidityMask,
) -> Result<f64> {
    let la = geometric_consistency_view(proj_ab, depth_b, mask_a).map_err(|e| tag_view(e, 0))?;
    let lb = geometric_consistency_view(proj_ba, depth_a, mask_b).map_err(|e| tag_view(e, 1))?;
    Ok(la + lb)
}
