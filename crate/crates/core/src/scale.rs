//! Relative-to-metric depth conversion and median scene depth from sparse
//! 3D points.

use std::fmt::Write as _;
use std::ops::Deref;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Point3, RigidPose, IN_FRONT_EPS};
use crate::grid::{Raster, ScalarGrid};

/// Strictly positive, finite metric depth.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap(ScalarGrid);

impl DepthMap {
    pub fn new(grid: ScalarGrid) -> Result<Self> {
        let w = grid.width();
        if let Some(i) = grid.as_slice().iter().position(|&d| !(d > 0.0)) {
            return Err(Error::invalid(format!(
                "depth at row {}, col {} must be positive, got {}",
                i / w,
                i % w,
                grid.as_slice()[i]
            )));
        }
        Ok(Self(grid))
    }

    pub fn grid(&self) -> &ScalarGrid {
        &self.0
    }

    pub fn into_grid(self) -> ScalarGrid {
        self.0
    }
}

impl Deref for DepthMap {
    type Target = ScalarGrid;
    fn deref(&self) -> &ScalarGrid {
        &self.0
    }
}

/// Median scene depth `μ` in meters.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct MedianDepth(f64);

impl MedianDepth {
    pub fn new(value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::invalid(format!("median depth must be positive and finite, got {value}")));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Depth `μ·exp(relative)` for every entry.
///
/// The derivative with respect to each relative entry is the output entry.
pub fn scale_transform(relative: &ScalarGrid, mu: MedianDepth) -> Result<DepthMap> {
    let mu = mu.value();
    let grid = relative.map(|r| mu * r.exp()).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::InvalidInput(format!("scale transform overflow: {msg}")),
        other => other,
    })?;
    DepthMap::new(grid)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparsePoint {
    pub position: Point3,
    pub pair_id: u32,
}

/// World-frame sparse reconstruction with view-pair provenance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparsePointCloud {
    pub points: Vec<SparsePoint>,
}

impl SparsePointCloud {
    pub fn new(points: Vec<SparsePoint>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Line-oriented `x y z pair_id` text. Coordinates use the shortest
    /// representation that parses back to the same `f64`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            let _ = writeln!(out, "{} {} {} {}", p.position.x, p.position.y, p.position.z, p.pair_id);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse { line: n + 1, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(parse_err(format!("expected `x y z pair_id`, got {} fields", fields.len())));
            }
            let mut xyz = [0.0; 3];
            for (slot, tok) in xyz.iter_mut().zip(&fields[..3]) {
                *slot = tok
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(format!("invalid coordinate `{tok}`")))?;
            }
            let pair_id = fields[3]
                .parse::<u32>()
                .map_err(|_| parse_err(format!("invalid pair id `{}`", fields[3])))?;
            points.push(SparsePoint { position: Point3::new(xyz[0], xyz[1], xyz[2]), pair_id });
        }
        Ok(Self { points })
    }
}

/// A sparse observation: continuous pixel location and camera-frame depth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SparseDepth {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Projects world points into a view (camera-to-world `world_pose`), keeping
/// those in front of the camera and inside the `height`×`width` raster.
pub fn sparse_view_depths(
    cloud: &SparsePointCloud,
    k: &CameraIntrinsics,
    world_pose: &RigidPose,
    (height, width): (usize, usize),
) -> Vec<SparseDepth> {
    let world_to_cam = world_pose.inverse();
    let (max_u, max_v) = ((width - 1) as f64, (height - 1) as f64);
    cloud
        .points
        .iter()
        .filter_map(|p| {
            let x = world_to_cam.transform_point(&p.position);
            if x.z <= IN_FRONT_EPS {
                return None;
            }
            let (u, v) = k.project(&x)?;
            ((0.0..=max_u).contains(&u) && (0.0..=max_v).contains(&v)).then_some(SparseDepth { u, v, depth: x.z })
        })
        .collect()
}

/// Lower median: element `⌊(n−1)/2⌋` of the ascending sort.
pub fn median_depth(depths: &[f64]) -> Result<MedianDepth> {
    if depths.is_empty() {
        return Err(Error::InsufficientData("median of an empty depth list".into()));
    }
    let mut sorted = depths.to_vec();
    sorted.sort_by(f64::total_cmp);
    MedianDepth::new(sorted[(sorted.len() - 1) / 2])
}

/// Median depth of a view from the points of `cloud` it sees.
pub fn view_median_depth(
    cloud: &SparsePointCloud,
    k: &CameraIntrinsics,
    world_pose: &RigidPose,
    dims: (usize, usize),
) -> Result<MedianDepth> {
    if cloud.is_empty() {
        return Err(Error::InsufficientData("sparse point cloud is empty".into()));
    }
    let depths: Vec<f64> = sparse_view_depths(cloud, k, world_pose, dims).iter().map(|s| s.depth).collect();
    median_depth(&depths).map_err(|_| Error::InsufficientData("no sparse point is visible in the view".into()))
}
