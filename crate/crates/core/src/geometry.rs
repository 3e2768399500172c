//! Pinhole cameras, rigid poses, dense cross-view projection and two-ray
//! triangulation.
//!
//! Pixel convention: `u` is the column index, `v` the row index, and the
//! origin sits at the center of the top-left pixel.

use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::grid::{Raster, ScalarGrid};

pub type Point3 = nalgebra::Point3<f64>;

/// Projected depth at or below this value counts as behind the camera.
pub const IN_FRONT_EPS: f64 = 1e-9;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::invalid(format!("focal lengths must be positive, got fx={fx}, fy={fy}")));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::invalid("principal point must be finite"));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Viewing ray through pixel `(u, v)` with unit z-component.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Pixel of a camera-frame point; `None` when the point is not in front.
    pub fn project(&self, p: &Point3) -> Option<(f64, f64)> {
        if p.z <= IN_FRONT_EPS {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Intrinsics of the 2x block-mean downsampled raster. A coarse pixel
    /// center sits at fine coordinate `2u + 0.5`.
    pub fn downsampled(&self) -> Self {
        Self {
            fx: self.fx / 2.0,
            fy: self.fy / 2.0,
            cx: (self.cx - 0.5) / 2.0,
            cy: (self.cy - 0.5) / 2.0,
        }
    }
}

/// Rigid transform `x -> rotation * x + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let orth = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if !(orth <= ORTHONORMAL_TOL) || !((det - 1.0).abs() <= ORTHONORMAL_TOL) {
            return Err(Error::invalid(format!(
                "rotation is not orthonormal with det 1 (orthogonality error {orth:e}, det {det})"
            )));
        }
        if translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("translation must be finite"));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self { rotation: Matrix3::identity(), translation }
    }

    /// Rotation given as an axis-angle vector (radians).
    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let rotation = Rotation3::from_scaled_axis(axis_angle).into_inner();
        Self::new(rotation, translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidPose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// Same transform with the translation scaled by `k`.
    pub fn with_scaled_translation(&self, k: f64) -> Self {
        Self { rotation: self.rotation, translation: self.translation * k }
    }

    fn is_exact_identity_rotation(&self) -> bool {
        self.rotation == Matrix3::identity()
    }
}

/// Transform taking camera-`a` coordinates to camera-`b` coordinates, given
/// both camera-to-world poses (`b⁻¹ ∘ a`).
pub fn relative_pose(world_pose_a: &RigidPose, world_pose_b: &RigidPose) -> RigidPose {
    world_pose_b.inverse().compose(world_pose_a)
}

/// Per-pixel result of projecting a source depth map into a destination view.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionMap {
    height: usize,
    width: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub projected_depth: Vec<f64>,
    pub in_front: Vec<bool>,
}

impl ProjectionMap {
    pub fn new(
        height: usize,
        width: usize,
        u: Vec<f64>,
        v: Vec<f64>,
        projected_depth: Vec<f64>,
        in_front: Vec<bool>,
    ) -> Result<Self> {
        let n = height * width;
        if u.len() != n || v.len() != n || projected_depth.len() != n || in_front.len() != n {
            return Err(Error::invalid(format!("projection map components must all have {n} entries")));
        }
        if let Some(i) = (0..n).find(|&i| in_front[i] && !(projected_depth[i] > 0.0)) {
            return Err(Error::invalid(format!("in-front pixel {i} has non-positive projected depth")));
        }
        Ok(Self { height, width, u, v, projected_depth, in_front })
    }

    /// Coordinates only; every pixel flagged in front at unit depth.
    pub fn from_coords(height: usize, width: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let n = height * width;
        Self::new(height, width, u, v, vec![1.0; n], vec![true; n])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// Derivatives of a [`ProjectionMap`] with respect to each source depth entry.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionJacobian {
    pub du_ddepth: Vec<f64>,
    pub dv_ddepth: Vec<f64>,
    pub dz_ddepth: Vec<f64>,
}

/// Single-pixel projection output with its depth derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelProjection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
    pub du: f64,
    pub dv: f64,
    pub dz: f64,
}

impl PixelProjection {
    pub fn in_front(&self) -> bool {
        self.depth > IN_FRONT_EPS
    }
}

/// Precomputed source-to-destination pixel mapping.
#[derive(Clone, Copy, Debug)]
pub struct Projector {
    k_src: CameraIntrinsics,
    k_dst: CameraIntrinsics,
    pose: RigidPose,
    // R = I and K_src = K_dst: coordinates are expressed as a displacement
    // from the source pixel so a zero translation maps pixels onto themselves
    // bit-exactly.
    shared_frame: bool,
}

impl Projector {
    pub fn new(k_src: CameraIntrinsics, k_dst: CameraIntrinsics, pose_src_to_dst: RigidPose) -> Self {
        let shared_frame = pose_src_to_dst.is_exact_identity_rotation() && k_src == k_dst;
        Self { k_src, k_dst, pose: pose_src_to_dst, shared_frame }
    }

    #[inline]
    pub fn project(&self, u: f64, v: f64, depth: f64) -> PixelProjection {
        let a = self.k_src.ray(u, v);
        let h = self.pose.rotation * a;
        let t = &self.pose.translation;
        let z = depth * h.z + t.z;
        let (pu, pv) = if self.shared_frame {
            (
                u + self.k_dst.fx * (t.x - a.x * t.z) / z,
                v + self.k_dst.fy * (t.y - a.y * t.z) / z,
            )
        } else {
            (
                self.k_dst.cx + self.k_dst.fx * (depth * h.x + t.x) / z,
                self.k_dst.cy + self.k_dst.fy * (depth * h.y + t.y) / z,
            )
        };
        let z2 = z * z;
        PixelProjection {
            u: pu,
            v: pv,
            depth: z,
            du: self.k_dst.fx * (h.x * t.z - t.x * h.z) / z2,
            dv: self.k_dst.fy * (h.y * t.z - t.y * h.z) / z2,
            dz: h.z,
        }
    }
}

fn check_depth(depth: &ScalarGrid) -> Result<()> {
    let w = depth.width();
    if let Some(i) = depth.as_slice().iter().position(|&d| !(d > 0.0 && d.is_finite())) {
        return Err(Error::invalid(format!(
            "depth at row {}, col {} must be positive and finite, got {}",
            i / w,
            i % w,
            depth.as_slice()[i]
        )));
    }
    Ok(())
}

/// Projects every source pixel through its depth into the destination view.
pub fn project_pixels(
    depth: &ScalarGrid,
    k_src: &CameraIntrinsics,
    k_dst: &CameraIntrinsics,
    pose_src_to_dst: &RigidPose,
) -> Result<ProjectionMap> {
    project_pixels_with_jacobian(depth, k_src, k_dst, pose_src_to_dst).map(|(m, _)| m)
}

/// [`project_pixels`] plus the per-pixel derivatives with respect to depth.
pub fn project_pixels_with_jacobian(
    depth: &ScalarGrid,
    k_src: &CameraIntrinsics,
    k_dst: &CameraIntrinsics,
    pose_src_to_dst: &RigidPose,
) -> Result<(ProjectionMap, ProjectionJacobian)> {
    check_depth(depth)?;
    let (h, w) = depth.dims();
    let n = h * w;
    let projector = Projector::new(*k_src, *k_dst, *pose_src_to_dst);
    let mut map = ProjectionMap {
        height: h,
        width: w,
        u: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        projected_depth: Vec::with_capacity(n),
        in_front: Vec::with_capacity(n),
    };
    let mut jac = ProjectionJacobian {
        du_ddepth: Vec::with_capacity(n),
        dv_ddepth: Vec::with_capacity(n),
        dz_ddepth: Vec::with_capacity(n),
    };
    for row in 0..h {
        for col in 0..w {
            let p = projector.project(col as f64, row as f64, depth.get(row, col));
            map.u.push(p.u);
            map.v.push(p.v);
            map.projected_depth.push(p.depth);
            map.in_front.push(p.in_front());
            jac.du_ddepth.push(p.du);
            jac.dv_ddepth.push(p.dv);
            jac.dz_ddepth.push(p.dz);
        }
    }
    Ok((map, jac))
}

/// Midpoint of the common perpendicular between two rays.
pub fn triangulate_midpoint(
    origin_a: &Point3,
    dir_a: &Vector3<f64>,
    origin_b: &Point3,
    dir_b: &Vector3<f64>,
) -> Result<Point3> {
    for (name, d) in [("dir_a", dir_a), ("dir_b", dir_b)] {
        if (d.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("{name} must be unit length, norm is {}", d.norm())));
        }
    }
    let b = dir_a.dot(dir_b);
    if b.abs() >= 1.0 - 1e-9 {
        return Err(Error::DegenerateGeometry(format!("rays are parallel (cos = {b})")));
    }
    // Minimize |oa + s·da − ob − t·db|² with |da| = |db| = 1.
    let w0 = origin_a - origin_b;
    let d = dir_a.dot(&w0);
    let e = dir_b.dot(&w0);
    let denom = 1.0 - b * b;
    let s = (b * e - d) / denom;
    let t = (e - b * d) / denom;
    let pa = origin_a + dir_a * s;
    let pb = origin_b + dir_b * t;
    Ok(Point3::from((pa.coords + pb.coords) * 0.5))
}
