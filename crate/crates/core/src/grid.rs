//! Row-major raster containers shared by every stage of the pipeline.
//!
//! [`ScalarGrid`] holds single-channel real data (depth, relative depth,
//! weights), [`Image`] holds 1- or 3-channel intensities in `[0, 1]` with
//! channels interleaved, and [`ValidityMask`] is a binary grid.

use crate::error::{Error, Result};

/// Common view over row-major, channel-interleaved rasters.
pub trait Raster: Sized {
    fn height(&self) -> usize;
    fn width(&self) -> usize;
    fn channels(&self) -> usize;
    fn values(&self) -> &[f64];

    /// Builds a raster of the same kind from raw values.
    fn from_parts(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self>;

    fn dims(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    fn len_pixels(&self) -> usize {
        self.height() * self.width()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarGrid {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!("grid dimensions {height}x{width} must be positive")));
        }
        if values.len() != height * width {
            return Err(Error::invalid(format!(
                "grid {height}x{width} needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite grid entry at row {}, col {}",
                i / width,
                i % width
            )));
        }
        Ok(Self { height, width, values })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0).expect("zero grid")
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width);
        for row in 0..height {
            for col in 0..width {
                values.push(f(row, col));
            }
        }
        Self::new(height, width, values)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Applies `f` entrywise; fails if the result is not finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.height, self.width, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for col in 0..self.width {
            for row in 0..self.height {
                values.push(self.get(row, col));
            }
        }
        Self { height: self.width, width: self.height, values }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

impl Raster for ScalarGrid {
    fn height(&self) -> usize {
        self.height
    }
    fn width(&self) -> usize {
        self.width
    }
    fn channels(&self) -> usize {
        1
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
    fn from_parts(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels != 1 {
            return Err(Error::invalid(format!("scalar grid cannot hold {channels} channels")));
        }
        Self::new(height, width, values)
    }
}

/// Intensity image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!("image dimensions {height}x{width} must be positive")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("image must have 1 or 3 channels, got {channels}")));
        }
        if values.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "image {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            let px = i / channels;
            return Err(Error::invalid(format!(
                "image value {} at row {}, col {} outside [0, 1]",
                values[i],
                px / width,
                px % width
            )));
        }
        Ok(Self { height, width, channels, values })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.values[(row * self.width + col) * self.channels + channel]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Per-pixel mean over channels.
    pub fn channel_mean(&self) -> ScalarGrid {
        let c = self.channels;
        let values = self
            .values
            .chunks_exact(c)
            .map(|px| px.iter().sum::<f64>() / c as f64)
            .collect();
        ScalarGrid::new(self.height, self.width, values).expect("channel mean of valid image")
    }
}

impl Raster for Image {
    fn height(&self) -> usize {
        self.height
    }
    fn width(&self) -> usize {
        self.width
    }
    fn channels(&self) -> usize {
        self.channels
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
    fn from_parts(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(height, width, channels, values)
    }
}

/// Binary per-pixel validity.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidityMask {
    height: usize,
    width: usize,
    valid: Vec<bool>,
}

impl ValidityMask {
    pub fn new(height: usize, width: usize, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != height * width {
            return Err(Error::invalid(format!(
                "mask {height}x{width} needs {} entries, got {}",
                height * width,
                valid.len()
            )));
        }
        Ok(Self { height, width, valid })
    }

    pub fn all(height: usize, width: usize, value: bool) -> Self {
        Self { height, width, valid: vec![value; height * width] }
    }

    /// Interprets a grid with entries in {0, 1} as a mask.
    pub fn from_grid(grid: &ScalarGrid) -> Result<Self> {
        let mut valid = Vec::with_capacity(grid.len_pixels());
        for &v in grid.as_slice() {
            match v {
                x if x == 0.0 => valid.push(false),
                x if x == 1.0 => valid.push(true),
                other => return Err(Error::invalid(format!("mask entry {other} is not binary"))),
            }
        }
        Self::new(grid.height(), grid.width(), valid)
    }

    pub fn to_grid(&self) -> ScalarGrid {
        let values = self.valid.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        ScalarGrid::new(self.height, self.width, values).expect("mask grid")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn is_valid(&self, index: usize) -> bool {
        self.valid[index]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.valid
    }

    pub fn count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }
}

pub(crate) fn check_same_dims(what: &str, a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!(
            "{what}: dimension mismatch {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_non_finite() {
        let err = ScalarGrid::new(1, 2, vec![0.0, f64::NAN]).unwrap_err();
        assert!(err.to_string().contains("col 1"));
    }

    #[test]
    fn grid_rejects_wrong_length() {
        assert!(ScalarGrid::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn image_rejects_out_of_range_and_bad_channels() {
        assert!(Image::new(1, 1, 1, vec![1.5]).is_err());
        assert!(Image::new(1, 1, 2, vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn mask_round_trips_through_grid() {
        let mask = ValidityMask::new(1, 3, vec![true, false, true]).unwrap();
        let back = ValidityMask::from_grid(&mask.to_grid()).unwrap();
        assert_eq!(mask, back);
        assert_eq!(back.count(), 2);
        let bad = ScalarGrid::new(1, 1, vec![0.5]).unwrap();
        assert!(ValidityMask::from_grid(&bad).is_err());
    }

    #[test]
    fn channel_mean_averages_interleaved_values() {
        let img = Image::new(1, 2, 3, vec![0.0, 0.3, 0.6, 1.0, 1.0, 1.0]).unwrap();
        let mean = img.channel_mean();
        assert!((mean.get(0, 0) - 0.3).abs() < 1e-15);
        assert_eq!(mean.get(0, 1), 1.0);
    }
}
