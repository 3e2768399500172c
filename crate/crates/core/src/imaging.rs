//! Differentiable raster operations: bilinear sampling with validity masks,
//! Sobel gradients, 2x block-mean pyramids and 3x3 SSIM.
//!
//! Every forward operation has an adjoint (`*_backward` / `*_adjoint`) used by
//! the loss gradient. Borders use replicate padding throughout.

use crate::error::{Error, Result};
use crate::geometry::ProjectionMap;
use crate::grid::{check_same_dims, Image, Raster, ScalarGrid, ValidityMask};

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

/// The four lattice neighbours of a continuous coordinate and its fractional
/// offsets inside the cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BilinearCell {
    pub i00: usize,
    pub i01: usize,
    pub i10: usize,
    pub i11: usize,
    pub fx: f64,
    pub fy: f64,
}

impl BilinearCell {
    /// Cell for `(x, y)` on an `height`×`width` raster, `None` when the
    /// coordinate falls outside `[0, width−1]×[0, height−1]`.
    ///
    /// On the last row/column the cell is anchored one step back so corner
    /// indices stay in range; integer coordinates elsewhere anchor at the
    /// coordinate itself (right/down one-sided derivative).
    pub fn locate(x: f64, y: f64, height: usize, width: usize) -> Option<Self> {
        let max_x = (width - 1) as f64;
        let max_y = (height - 1) as f64;
        if !(x >= 0.0 && x <= max_x && y >= 0.0 && y <= max_y) {
            return None;
        }
        let (x0, x1) = anchor(x, width);
        let (y0, y1) = anchor(y, height);
        Some(Self {
            i00: y0 * width + x0,
            i01: y0 * width + x1,
            i10: y1 * width + x0,
            i11: y1 * width + x1,
            fx: x - x0 as f64,
            fy: y - y0 as f64,
        })
    }

    #[inline]
    pub fn weights(&self) -> [f64; 4] {
        let (fx, fy) = (self.fx, self.fy);
        [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy]
    }

    #[inline]
    fn corners(&self) -> [usize; 4] {
        [self.i00, self.i01, self.i10, self.i11]
    }

    /// Interpolated value of channel `c` in interleaved `values`.
    #[inline]
    pub fn sample(&self, values: &[f64], channels: usize, c: usize) -> f64 {
        let w = self.weights();
        let idx = self.corners();
        w[0] * values[idx[0] * channels + c]
            + w[1] * values[idx[1] * channels + c]
            + w[2] * values[idx[2] * channels + c]
            + w[3] * values[idx[3] * channels + c]
    }

    /// Partial derivatives of [`Self::sample`] with respect to `x` and `y`.
    #[inline]
    pub fn sample_gradient(&self, values: &[f64], channels: usize, c: usize) -> (f64, f64) {
        let v00 = values[self.i00 * channels + c];
        let v01 = values[self.i01 * channels + c];
        let v10 = values[self.i10 * channels + c];
        let v11 = values[self.i11 * channels + c];
        let dx = (1.0 - self.fy) * (v01 - v00) + self.fy * (v11 - v10);
        let dy = (1.0 - self.fx) * (v10 - v00) + self.fx * (v11 - v01);
        (dx, dy)
    }
}

fn anchor(x: f64, size: usize) -> (usize, usize) {
    if size == 1 {
        return (0, 0);
    }
    let x0 = (x.floor() as usize).min(size - 2);
    (x0, x0 + 1)
}

/// Validity of each destination pixel: in front of the camera and inside the
/// source raster.
pub fn validity_mask(height: usize, width: usize, coords: &ProjectionMap) -> ValidityMask {
    let valid = (0..coords.height() * coords.width())
        .map(|i| coords.in_front[i] && BilinearCell::locate(coords.u[i], coords.v[i], height, width).is_some())
        .collect();
    ValidityMask::new(coords.height(), coords.width(), valid).expect("mask dims")
}

/// Samples `source` at every projected coordinate. Masked-out pixels are 0.
pub fn bilinear_sample<R: Raster>(source: &R, coords: &ProjectionMap) -> Result<(R, ValidityMask)> {
    let (h, w) = source.dims();
    let c = source.channels();
    let n = coords.height() * coords.width();
    let mut out = vec![0.0; n * c];
    let mut valid = vec![false; n];
    let values = source.values();
    for i in 0..n {
        if !coords.in_front[i] {
            continue;
        }
        if let Some(cell) = BilinearCell::locate(coords.u[i], coords.v[i], h, w) {
            valid[i] = true;
            for ch in 0..c {
                out[i * c + ch] = cell.sample(values, c, ch);
            }
        }
    }
    let sampled = R::from_parts(coords.height(), coords.width(), c, out)?;
    let mask = ValidityMask::new(coords.height(), coords.width(), valid)?;
    Ok((sampled, mask))
}

/// Gradients flowing out of [`bilinear_sample`].
#[derive(Clone, Debug, PartialEq)]
pub struct BilinearGrad {
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
    /// Gradient with respect to the source values (interleaved like the source).
    pub source: Vec<f64>,
}

/// Adjoint of [`bilinear_sample`] given the gradient of a scalar with respect
/// to every sampled value.
pub fn bilinear_sample_backward<R: Raster>(
    source: &R,
    coords: &ProjectionMap,
    grad_out: &[f64],
) -> Result<BilinearGrad> {
    let (h, w) = source.dims();
    let c = source.channels();
    let n = coords.height() * coords.width();
    if grad_out.len() != n * c {
        return Err(Error::invalid(format!("output gradient needs {} entries, got {}", n * c, grad_out.len())));
    }
    let values = source.values();
    let mut grad = BilinearGrad { du: vec![0.0; n], dv: vec![0.0; n], source: vec![0.0; values.len()] };
    for i in 0..n {
        if !coords.in_front[i] {
            continue;
        }
        let Some(cell) = BilinearCell::locate(coords.u[i], coords.v[i], h, w) else {
            continue;
        };
        let wts = cell.weights();
        let idx = cell.corners();
        for ch in 0..c {
            let g = grad_out[i * c + ch];
            if g == 0.0 {
                continue;
            }
            let (dx, dy) = cell.sample_gradient(values, c, ch);
            grad.du[i] += g * dx;
            grad.dv[i] += g * dy;
            for k in 0..4 {
                grad.source[idx[k] * c + ch] += g * wts[k];
            }
        }
    }
    Ok(grad)
}

#[inline]
fn clamp_index(i: isize, size: usize) -> usize {
    i.clamp(0, size as isize - 1) as usize
}

fn check_sobel_dims(h: usize, w: usize) -> Result<()> {
    if h < 3 || w < 3 {
        return Err(Error::invalid(format!("Sobel gradients need at least 3x3, got {h}x{w}")));
    }
    Ok(())
}

/// 3x3 Sobel responses `(gx, gy)` with replicate padding.
pub fn sobel_gradients(grid: &ScalarGrid) -> Result<(ScalarGrid, ScalarGrid)> {
    let (h, w) = grid.dims();
    check_sobel_dims(h, w)?;
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    let at = |r: isize, c: isize| grid.get(clamp_index(r, h), clamp_index(c, w));
    for r in 0..h as isize {
        for c in 0..w as isize {
            // Difference of two identically ordered [1 2 1] sums: constant
            // neighbourhoods give exactly zero.
            let col = |cc: isize| at(r - 1, cc) + 2.0 * at(r, cc) + at(r + 1, cc);
            let row = |rr: isize| at(rr, c - 1) + 2.0 * at(rr, c) + at(rr, c + 1);
            let i = r as usize * w + c as usize;
            gx[i] = col(c + 1) - col(c - 1);
            gy[i] = row(r + 1) - row(r - 1);
        }
    }
    Ok((ScalarGrid::new(h, w, gx)?, ScalarGrid::new(h, w, gy)?))
}

/// Adjoint of [`sobel_gradients`]: maps gradients on `(gx, gy)` back onto the
/// input grid.
pub fn sobel_adjoint(height: usize, width: usize, grad_gx: &[f64], grad_gy: &[f64]) -> Result<Vec<f64>> {
    check_sobel_dims(height, width)?;
    let n = height * width;
    if grad_gx.len() != n || grad_gy.len() != n {
        return Err(Error::invalid("Sobel adjoint gradients must match grid size"));
    }
    let mut out = vec![0.0; n];
    for r in 0..height {
        for c in 0..width {
            let (gx, gy) = (grad_gx[r * width + c], grad_gy[r * width + c]);
            if gx == 0.0 && gy == 0.0 {
                continue;
            }
            for (kr, dr) in (-1isize..=1).enumerate() {
                let rr = clamp_index(r as isize + dr, height);
                for (kc, dc) in (-1isize..=1).enumerate() {
                    let cc = clamp_index(c as isize + dc, width);
                    out[rr * width + cc] += SOBEL_X[kr][kc] * gx + SOBEL_Y[kr][kc] * gy;
                }
            }
        }
    }
    Ok(out)
}

/// Halves both dimensions by averaging 2x2 blocks.
pub fn downsample2x<R: Raster>(raster: &R) -> Result<R> {
    let (h, w) = raster.dims();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::invalid(format!("downsampling needs even dimensions, got {h}x{w}")));
    }
    let c = raster.channels();
    let (hh, hw) = (h / 2, w / 2);
    let src = raster.values();
    let mut out = Vec::with_capacity(hh * hw * c);
    for r in 0..hh {
        for col in 0..hw {
            for ch in 0..c {
                let at = |rr: usize, cc: usize| src[(rr * w + cc) * c + ch];
                let sum = at(2 * r, 2 * col) + at(2 * r, 2 * col + 1) + at(2 * r + 1, 2 * col) + at(2 * r + 1, 2 * col + 1);
                out.push(sum * 0.25);
            }
        }
    }
    R::from_parts(hh, hw, c, out)
}

/// Adjoint of [`downsample2x`] for a single-channel coarse gradient.
pub fn downsample2x_adjoint(coarse_grad: &[f64], coarse_height: usize, coarse_width: usize) -> Vec<f64> {
    let w = coarse_width * 2;
    let mut out = vec![0.0; coarse_height * 2 * w];
    for r in 0..coarse_height {
        for c in 0..coarse_width {
            let g = coarse_grad[r * coarse_width + c] * 0.25;
            out[2 * r * w + 2 * c] = g;
            out[2 * r * w + 2 * c + 1] = g;
            out[(2 * r + 1) * w + 2 * c] = g;
            out[(2 * r + 1) * w + 2 * c + 1] = g;
        }
    }
    out
}

#[derive(Clone, Copy)]
struct WindowStats {
    mu_a: f64,
    mu_b: f64,
    a1: f64,
    a2: f64,
    b1: f64,
    b2: f64,
}

impl WindowStats {
    fn ssim(&self) -> f64 {
        (self.a1 * self.a2) / (self.b1 * self.b2)
    }
}

fn window_indices(r: usize, c: usize, h: usize, w: usize) -> [usize; 9] {
    let mut idx = [0usize; 9];
    let mut k = 0;
    for dr in -1isize..=1 {
        let rr = clamp_index(r as isize + dr, h);
        for dc in -1isize..=1 {
            idx[k] = rr * w + clamp_index(c as isize + dc, w);
            k += 1;
        }
    }
    idx
}

fn window_stats(a: &[f64], b: &[f64], channels: usize, ch: usize, idx: &[usize; 9]) -> WindowStats {
    let (mut sa, mut sb) = (0.0, 0.0);
    for &q in idx {
        sa += a[q * channels + ch];
        sb += b[q * channels + ch];
    }
    let mu_a = sa / 9.0;
    let mu_b = sb / 9.0;
    let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
    for &q in idx {
        let da = a[q * channels + ch] - mu_a;
        let db = b[q * channels + ch] - mu_b;
        vaa += da * da;
        vbb += db * db;
        vab += da * db;
    }
    let (var_a, var_b, cov) = (vaa / 9.0, vbb / 9.0, vab / 9.0);
    WindowStats {
        mu_a,
        mu_b,
        a1: 2.0 * mu_a * mu_b + SSIM_C1,
        a2: 2.0 * cov + SSIM_C2,
        b1: mu_a * mu_a + mu_b * mu_b + SSIM_C1,
        b2: var_a + var_b + SSIM_C2,
    }
}

fn check_same_image_shape(a: &Image, b: &Image) -> Result<()> {
    check_same_dims("ssim", a.dims(), b.dims())?;
    if a.channels() != b.channels() {
        return Err(Error::invalid(format!("ssim: channel mismatch {} vs {}", a.channels(), b.channels())));
    }
    Ok(())
}

/// Per-pixel SSIM over 3x3 box windows, averaged over channels.
pub fn ssim_map(a: &Image, b: &Image) -> Result<ScalarGrid> {
    check_same_image_shape(a, b)?;
    let (h, w) = a.dims();
    let c = a.channels();
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for col in 0..w {
            let idx = window_indices(r, col, h, w);
            let mut s = 0.0;
            for ch in 0..c {
                s += window_stats(a.as_slice(), b.as_slice(), c, ch, &idx).ssim();
            }
            out.push(s / c as f64);
        }
    }
    ScalarGrid::new(h, w, out)
}

/// Gradient with respect to `b` of `Σ_p grad_map[p] · ssim_map(a, b)[p]`.
pub fn ssim_map_backward(a: &Image, b: &Image, grad_map: &[f64]) -> Result<Vec<f64>> {
    check_same_image_shape(a, b)?;
    let (h, w) = a.dims();
    let c = a.channels();
    if grad_map.len() != h * w {
        return Err(Error::invalid("ssim backward: gradient map size mismatch"));
    }
    let (av, bv) = (a.as_slice(), b.as_slice());
    let mut grad = vec![0.0; av.len()];
    for r in 0..h {
        for col in 0..w {
            let g = grad_map[r * w + col];
            if g == 0.0 {
                continue;
            }
            let g = g / c as f64;
            let idx = window_indices(r, col, h, w);
            for ch in 0..c {
                let st = window_stats(av, bv, c, ch, &idx);
                let s = st.ssim();
                let denom = st.b1 * st.b2;
                let common = 2.0 * st.mu_a * st.a2 / denom - s * 2.0 * st.mu_b / st.b1;
                for &q in &idx {
                    let da = av[q * c + ch] - st.mu_a;
                    let db = bv[q * c + ch] - st.mu_b;
                    let d = common + 2.0 * st.a1 * da / denom - s * 2.0 * db / st.b2;
                    grad[q * c + ch] += g * d / 9.0;
                }
            }
        }
    }
    Ok(grad)
}
