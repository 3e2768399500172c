//! Procedural two-view planar scenes with exact ground truth.
//!
//! A scene is a single textured plane `n·X = offset` in world coordinates.
//! The texture is a sum of 3D sinusoids evaluated at the ray–plane
//! intersection, so every view of the scene is photometrically consistent.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Point3, RigidPose, IN_FRONT_EPS};
use crate::grid::{Image, Raster, ScalarGrid};
use crate::objective::{ScenePair, ViewData};
use crate::scale::{view_median_depth, DepthMap, SparsePoint, SparsePointCloud};

/// One sinusoid `amplitude·sin(2π·frequency·X + phase)` added to a channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TextureComponent {
    pub channel: usize,
    pub amplitude: f64,
    /// Cycles per meter along each world axis.
    pub frequency: Vector3<f64>,
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanarScene {
    normal: Vector3<f64>,
    offset: f64,
    texture: Vec<TextureComponent>,
}

impl PlanarScene {
    pub fn new(normal: Vector3<f64>, offset: f64, texture: Vec<TextureComponent>) -> Result<Self> {
        if (normal.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("plane normal must be unit length, norm is {}", normal.norm())));
        }
        if !(offset > 0.0 && offset.is_finite()) {
            return Err(Error::invalid(format!("plane offset must be positive, got {offset}")));
        }
        let mut budget = [0.0f64; 3];
        for (i, t) in texture.iter().enumerate() {
            if t.channel > 2 {
                return Err(Error::invalid(format!("texture component {i}: channel {} out of range", t.channel)));
            }
            if !(t.amplitude.is_finite() && t.phase.is_finite() && t.frequency.iter().all(|f| f.is_finite())) {
                return Err(Error::invalid(format!("texture component {i} has non-finite parameters")));
            }
            budget[t.channel] += t.amplitude.abs();
        }
        if let Some(ch) = budget.iter().position(|&b| b > 0.5) {
            return Err(Error::invalid(format!(
                "texture amplitudes of channel {ch} sum to {} > 0.5; intensities would leave [0, 1]",
                budget[ch]
            )));
        }
        Ok(Self { normal, offset, texture })
    }

    pub fn normal(&self) -> &Vector3<f64> {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn texture(&self) -> &[TextureComponent] {
        &self.texture
    }

    /// Intensity of every channel at a world point.
    pub fn shade(&self, x: &Point3) -> [f64; 3] {
        let mut rgb = [0.5; 3];
        for t in &self.texture {
            rgb[t.channel] += t.amplitude * (TAU * t.frequency.dot(&x.coords) + t.phase).sin();
        }
        rgb.map(|v| v.clamp(0.0, 1.0))
    }

    /// The same scene enlarged by `k`: offset scaled, texture frequencies
    /// divided so surface appearance is unchanged.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        let texture = self.texture.iter().map(|t| TextureComponent { frequency: t.frequency / k, ..*t }).collect();
        Self::new(self.normal, self.offset * k, texture)
    }

    /// Intersection of the viewing ray through `(u, v)` with the plane:
    /// world point and camera-frame depth.
    pub fn intersect(&self, k: &CameraIntrinsics, world_pose: &RigidPose, u: f64, v: f64) -> Result<(Point3, f64)> {
        let ray = world_pose.rotation() * k.ray(u, v);
        let center = world_pose.translation();
        let denom = self.normal.dot(&ray);
        let lambda = (self.offset - self.normal.dot(center)) / denom;
        if denom == 0.0 || !lambda.is_finite() || lambda <= IN_FRONT_EPS {
            return Err(Error::SceneConfiguration(format!(
                "ray through pixel (u={u}, v={v}) does not hit the plane in front of the camera"
            )));
        }
        Ok((Point3::from(center + ray * lambda), lambda))
    }
}

/// Renders the image and ground-truth depth seen by a camera.
pub fn render_view(
    scene: &PlanarScene,
    k: &CameraIntrinsics,
    world_pose: &RigidPose,
    (height, width): (usize, usize),
) -> Result<(Image, DepthMap)> {
    let mut rgb = Vec::with_capacity(height * width * 3);
    let mut depth = Vec::with_capacity(height * width);
    for row in 0..height {
        for col in 0..width {
            let (x, d) = scene.intersect(k, world_pose, col as f64, row as f64)?;
            rgb.extend_from_slice(&scene.shade(&x));
            depth.push(d);
        }
    }
    Ok((Image::new(height, width, 3, rgb)?, DepthMap::new(ScalarGrid::new(height, width, depth)?)?))
}

/// Largest texture frequency in cycles per pixel over the raster, measured
/// from the phase advance between neighbouring pixels.
pub fn texture_max_frequency(
    scene: &PlanarScene,
    k: &CameraIntrinsics,
    world_pose: &RigidPose,
    (height, width): (usize, usize),
) -> Result<f64> {
    let mut max = 0.0f64;
    for row in 0..height {
        for col in 0..width {
            let (x, _) = scene.intersect(k, world_pose, col as f64, row as f64)?;
            for (du, dv) in [(1.0, 0.0), (0.0, 1.0)] {
                let (y, _) = scene.intersect(k, world_pose, col as f64 + du, row as f64 + dv)?;
                let step = y - x;
                for t in &scene.texture {
                    max = max.max(t.frequency.dot(&step).abs());
                }
            }
        }
    }
    Ok(max)
}

/// A camera of the synthetic rig.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    /// Camera-to-world pose.
    pub world_pose: RigidPose,
}

/// Seeded sample of `n` exact plane points seen by both cameras.
///
/// Pixels are drawn uniformly over the first view; points that fall outside
/// the second view are redrawn. All points carry `pair_id` 0.
pub fn sample_correspondences(
    scene: &PlanarScene,
    cameras: &[Camera; 2],
    (height, width): (usize, usize),
    n: usize,
    seed: u64,
) -> SparsePointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let second_inv = cameras[1].world_pose.inverse();
    let (max_u, max_v) = ((width - 1) as f64, (height - 1) as f64);
    let max_attempts = n.saturating_mul(1000).max(1000);
    for _ in 0..max_attempts {
        if points.len() == n {
            break;
        }
        let u = rng.random_range(0.0..=max_u);
        let v = rng.random_range(0.0..=max_v);
        let Ok((x, _)) = scene.intersect(&cameras[0].intrinsics, &cameras[0].world_pose, u, v) else {
            continue;
        };
        let in_second = cameras[1].intrinsics.project(&second_inv.transform_point(&x));
        if let Some((u2, v2)) = in_second {
            if (0.0..=max_u).contains(&u2) && (0.0..=max_v).contains(&v2) {
                points.push(SparsePoint { position: x, pair_id: 0 });
            }
        }
    }
    SparsePointCloud::new(points)
}

/// A fully specified synthetic experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub scene: PlanarScene,
    pub cameras: [Camera; 2],
    pub dims: (usize, usize),
    pub seed: u64,
    pub sparse_points: usize,
}

/// Rendered images, ground truth and sparse reconstruction.
#[derive(Clone, Debug)]
pub struct RenderedScene {
    pub images: [Image; 2],
    pub depths: [DepthMap; 2],
    pub cloud: SparsePointCloud,
    pub cameras: [Camera; 2],
}

impl SyntheticScene {
    pub fn render(&self) -> Result<RenderedScene> {
        let (i1, d1) = render_view(&self.scene, &self.cameras[0].intrinsics, &self.cameras[0].world_pose, self.dims)?;
        let (i2, d2) = render_view(&self.scene, &self.cameras[1].intrinsics, &self.cameras[1].world_pose, self.dims)?;
        let cloud = sample_correspondences(&self.scene, &self.cameras, self.dims, self.sparse_points, self.seed);
        Ok(RenderedScene { images: [i1, i2], depths: [d1, d2], cloud, cameras: self.cameras })
    }

    /// Scene enlarged by `k`: plane, camera positions and texture scale.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        let cameras = self.cameras.map(|c| Camera { world_pose: c.world_pose.with_scaled_translation(k), ..c });
        Ok(Self { scene: self.scene.scaled(k)?, cameras, ..self.clone() })
    }
}

impl RenderedScene {
    /// Two-view problem with per-view medians taken from the sparse cloud.
    pub fn scene_pair(&self) -> Result<ScenePair> {
        let dims = (self.images[0].height(), self.images[0].width());
        let view = |k: usize| -> Result<ViewData> {
            let cam = &self.cameras[k];
            Ok(ViewData {
                image: self.images[k].clone(),
                intrinsics: cam.intrinsics,
                world_pose: cam.world_pose,
                median: view_median_depth(&self.cloud, &cam.intrinsics, &cam.world_pose, dims)?,
                gt_depth: Some(self.depths[k].clone()),
            })
        };
        ScenePair::new(view(0)?, view(1)?)
    }
}

/// Plain-text intrinsics and poses: per view one `fx fy cx cy` line followed
/// by three `r0 r1 r2 t` pose rows (camera-to-world). `#` starts a comment.
pub fn cameras_to_text(cameras: &[Camera; 2]) -> String {
    let mut out = String::new();
    for (i, cam) in cameras.iter().enumerate() {
        let k = &cam.intrinsics;
        let _ = writeln!(out, "# view {}", i + 1);
        let _ = writeln!(out, "{} {} {} {}", k.fx, k.fy, k.cx, k.cy);
        let (r, t) = (cam.world_pose.rotation(), cam.world_pose.translation());
        for row in 0..3 {
            let _ = writeln!(out, "{} {} {} {}", r[(row, 0)], r[(row, 1)], r[(row, 2)], t[row]);
        }
    }
    out
}

pub fn parse_cameras(text: &str) -> Result<[Camera; 2]> {
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let values = line
            .split_whitespace()
            .map(|tok| tok.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::Parse { line: n + 1, message: format!("invalid number in `{line}`") })?;
        if values.len() != 4 {
            return Err(Error::Parse { line: n + 1, message: format!("expected 4 numbers, got {}", values.len()) });
        }
        rows.push((n + 1, values));
    }
    if rows.len() != 8 {
        return Err(Error::Parse {
            line: rows.last().map_or(1, |r| r.0),
            message: format!("expected 8 data lines (2 views x 4), got {}", rows.len()),
        });
    }
    let camera = |base: usize| -> Result<Camera> {
        let k = &rows[base].1;
        let intrinsics = CameraIntrinsics::new(k[0], k[1], k[2], k[3])
            .map_err(|e| Error::Parse { line: rows[base].0, message: e.to_string() })?;
        let p = |r: usize, c: usize| rows[base + 1 + r].1[c];
        let rotation = Matrix3::new(p(0, 0), p(0, 1), p(0, 2), p(1, 0), p(1, 1), p(1, 2), p(2, 0), p(2, 1), p(2, 2));
        let translation = Vector3::new(p(0, 3), p(1, 3), p(2, 3));
        let world_pose = RigidPose::new(rotation, translation)
            .map_err(|e| Error::Parse { line: rows[base + 1].0, message: e.to_string() })?;
        Ok(Camera { intrinsics, world_pose })
    };
    Ok([camera(0)?, camera(4)?])
}

// Scene descriptor file (TOML).

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneSpec {
    pub normal: [f64; 3],
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    /// `[fx, fy, cx, cy]` in pixels.
    pub intrinsics: [f64; 4],
    /// Axis-angle rotation (radians) of the camera-to-world pose.
    #[serde(default)]
    pub rotation: [f64; 3],
    /// Camera center in world coordinates (meters).
    #[serde(default)]
    pub translation: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextureSpec {
    pub channel: usize,
    pub amplitude: f64,
    pub frequency: [f64; 3],
    #[serde(default)]
    pub phase: f64,
}

fn default_sparse_points() -> usize {
    200
}

fn default_max_frequency() -> f64 {
    0.25
}

/// Structured description of a synthetic scene.
///
/// ```toml
/// width = 64
/// height = 64
/// seed = 7
/// sparse_points = 200        # optional
/// max_pixel_frequency = 0.25 # optional texture band limit (cycles/pixel)
///
/// [plane]
/// normal = [0.0, -0.47, 0.88]
/// offset = 4.0
///
/// [camera1]
/// intrinsics = [64.0, 64.0, 31.5, 31.5]
/// rotation = [0.0, 0.0, 0.0]     # optional, axis-angle radians
/// translation = [0.0, 0.0, 0.0]  # optional
///
/// [camera2]
/// intrinsics = [64.0, 64.0, 31.5, 31.5]
/// translation = [0.3, 0.0, 0.0]
///
/// [[texture]]
/// channel = 0
/// amplitude = 0.2
/// frequency = [1.0, 0.3, 0.0]
/// phase = 0.0
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDescriptor {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    #[serde(default = "default_sparse_points")]
    pub sparse_points: usize,
    #[serde(default = "default_max_frequency")]
    pub max_pixel_frequency: f64,
    pub plane: PlaneSpec,
    pub camera1: CameraSpec,
    pub camera2: CameraSpec,
    #[serde(default)]
    pub texture: Vec<TextureSpec>,
}

/// Line number (1-based) of a byte offset.
pub fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

impl SceneDescriptor {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("descriptor serializes")
    }

    /// Validates the descriptor and assembles the scene.
    pub fn build(&self) -> Result<SyntheticScene> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("width and height must be positive"));
        }
        if self.sparse_points == 0 {
            return Err(Error::invalid("sparse_points must be at least 1"));
        }
        let texture = self
            .texture
            .iter()
            .map(|t| TextureComponent {
                channel: t.channel,
                amplitude: t.amplitude,
                frequency: Vector3::from(t.frequency),
                phase: t.phase,
            })
            .collect();
        let scene = PlanarScene::new(Vector3::from(self.plane.normal), self.plane.offset, texture)?;
        let camera = |spec: &CameraSpec| -> Result<Camera> {
            let [fx, fy, cx, cy] = spec.intrinsics;
            Ok(Camera {
                intrinsics: CameraIntrinsics::new(fx, fy, cx, cy)?,
                world_pose: RigidPose::from_axis_angle(Vector3::from(spec.rotation), Vector3::from(spec.translation))?,
            })
        };
        let cameras = [camera(&self.camera1)?, camera(&self.camera2)?];
        let dims = (self.height, self.width);
        for cam in &cameras {
            let f = texture_max_frequency(&scene, &cam.intrinsics, &cam.world_pose, dims)?;
            if f > self.max_pixel_frequency {
                return Err(Error::invalid(format!(
                    "texture reaches {f:.3} cycles/pixel, above the {} band limit",
                    self.max_pixel_frequency
                )));
            }
        }
        Ok(SyntheticScene { scene, cameras, dims, seed: self.seed, sparse_points: self.sparse_points })
    }

    /// Slanted textured plane viewed by a horizontally displaced, slightly
    /// yawed second camera. Geometry is resolution independent; texture
    /// frequencies scale with `size` so their pixel bandwidth is fixed.
    pub fn slanted_reference(size: usize) -> Self {
        let s = size as f64;
        let f = s; // ~53° field of view
        let c = (s - 1.0) / 2.0;
        let px = 0.6 * s / 64.0;
        let tex = |channel: usize, amplitude: f64, fr: [f64; 3], phase: f64| TextureSpec {
            channel,
            amplitude,
            frequency: [fr[0] * px, fr[1] * px, fr[2] * px],
            phase,
        };
        let n = Vector3::new(0.15, -0.45, 0.88).normalize();
        Self {
            width: size,
            height: size,
            seed: 7,
            sparse_points: 200,
            max_pixel_frequency: 0.25,
            plane: PlaneSpec { normal: [n.x, n.y, n.z], offset: 4.0 },
            camera1: CameraSpec { intrinsics: [f, f, c, c], rotation: [0.0; 3], translation: [0.0; 3] },
            camera2: CameraSpec { intrinsics: [f, f, c, c], rotation: [0.0, -0.02, 0.0], translation: [0.3, 0.02, 0.04] },
            texture: vec![
                tex(0, 0.22, [0.9, 0.25, 0.1], 0.3),
                tex(0, 0.15, [-0.35, 0.8, 0.0], 1.1),
                tex(0, 0.08, [1.7, -0.6, 0.2], 2.0),
                tex(1, 0.2, [0.6, -0.7, 0.1], 0.7),
                tex(1, 0.15, [1.3, 0.45, 0.0], 2.4),
                tex(1, 0.08, [-0.2, 1.6, 0.3], 0.1),
                tex(2, 0.22, [1.1, 0.9, -0.1], 1.9),
                tex(2, 0.15, [-0.8, 0.4, 0.2], 0.5),
                tex(2, 0.08, [0.3, -1.8, 0.0], 2.9),
            ],
        }
    }

    /// Fronto-parallel plane at depth `depth` with a purely horizontal
    /// baseline.
    pub fn fronto_parallel(size: usize, depth: f64, baseline: f64) -> Self {
        let mut d = Self::slanted_reference(size);
        d.plane = PlaneSpec { normal: [0.0, 0.0, 1.0], offset: depth };
        d.camera2.rotation = [0.0; 3];
        d.camera2.translation = [baseline, 0.0, 0.0];
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fronto(d: f64) -> PlanarScene {
        PlanarScene::new(
            Vector3::new(0.0, 0.0, 1.0),
            d,
            vec![TextureComponent { channel: 0, amplitude: 0.3, frequency: Vector3::new(1.0, 0.5, 0.0), phase: 0.2 }],
        )
        .unwrap()
    }

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(32.0, 32.0, 15.5, 11.5).unwrap()
    }

    #[test]
    fn fronto_parallel_depth_is_constant() {
        let (img, depth) = render_view(&fronto(5.0), &k(), &RigidPose::identity(), (24, 32)).unwrap();
        assert!(depth.as_slice().iter().all(|&d| d == 5.0));
        assert_eq!(img.channels(), 3);
        assert!(img.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    // Bisection on the signed plane distance along the ray.
    fn ray_march(scene: &PlanarScene, k: &CameraIntrinsics, pose: &RigidPose, u: f64, v: f64) -> f64 {
        let ray = pose.rotation() * k.ray(u, v);
        let c = pose.translation();
        let f = |l: f64| scene.normal().dot(&(c + ray * l)) - scene.offset();
        let (mut lo, mut hi) = (1e-6, 1e3);
        assert!(f(lo) * f(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn slanted_depth_matches_ray_march() {
        let theta: f64 = 0.4;
        let scene = PlanarScene::new(Vector3::new(theta.sin(), 0.0, theta.cos()), 3.0, vec![]).unwrap();
        let pose = RigidPose::from_axis_angle(Vector3::new(0.02, 0.05, 0.0), Vector3::new(0.1, 0.0, -0.2)).unwrap();
        let (_, depth) = render_view(&scene, &k(), &pose, (24, 32)).unwrap();
        for &(r, c) in &[(0usize, 0usize), (11, 15), (23, 31), (5, 27)] {
            let oracle = ray_march(&scene, &k(), &pose, c as f64, r as f64);
            assert!((depth.get(r, c) - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn ray_missing_plane_names_pixel() {
        // Camera looks away from the plane.
        let scene = PlanarScene::new(Vector3::new(0.0, 0.0, 1.0), 5.0, vec![]).unwrap();
        let pose = RigidPose::from_axis_angle(Vector3::new(0.0, std::f64::consts::PI, 0.0), Vector3::zeros()).unwrap();
        let err = render_view(&scene, &k(), &pose, (4, 4)).unwrap_err();
        assert!(matches!(err, Error::SceneConfiguration(ref m) if m.contains("u=0, v=0")), "{err}");
    }

    #[test]
    fn scene_validation() {
        assert!(PlanarScene::new(Vector3::new(0.0, 0.0, 2.0), 1.0, vec![]).is_err());
        assert!(PlanarScene::new(Vector3::new(0.0, 0.0, 1.0), -1.0, vec![]).is_err());
        let loud = TextureComponent { channel: 1, amplitude: 0.3, frequency: Vector3::zeros(), phase: 0.0 };
        assert!(PlanarScene::new(Vector3::new(0.0, 0.0, 1.0), 1.0, vec![loud, loud]).is_err());
    }

    #[test]
    fn center_pixel_lies_on_optical_axis() {
        let scene = fronto(6.5);
        let kk = k();
        let (x, d) = scene.intersect(&kk, &RigidPose::identity(), kk.cx, kk.cy).unwrap();
        assert_eq!((x.x, x.y, x.z), (0.0, 0.0, 6.5));
        assert_eq!(d, 6.5);
    }

    #[test]
    fn correspondences_lie_on_plane_and_are_seeded() {
        let desc = SceneDescriptor::slanted_reference(32);
        let synth = desc.build().unwrap();
        let a = sample_correspondences(&synth.scene, &synth.cameras, synth.dims, 50, 3);
        let b = sample_correspondences(&synth.scene, &synth.cameras, synth.dims, 50, 3);
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        for p in &a.points {
            assert!((synth.scene.normal().dot(&p.position.coords) - synth.scene.offset()).abs() < 1e-12);
        }
    }

    #[test]
    fn fronto_parallel_median_is_plane_depth() {
        let synth = SceneDescriptor::fronto_parallel(32, 4.5, 0.3).build().unwrap();
        let pair = synth.render().unwrap().scene_pair().unwrap();
        assert_eq!(pair.view(0).median.value(), 4.5);
        assert_eq!(pair.view(1).median.value(), 4.5);
    }

    #[test]
    fn cameras_text_round_trip() {
        let synth = SceneDescriptor::slanted_reference(16).build().unwrap();
        let text = cameras_to_text(&synth.cameras);
        assert_eq!(parse_cameras(&text).unwrap(), synth.cameras);
        assert!(matches!(parse_cameras("1 2 3 4\n"), Err(Error::Parse { .. })));
        let bad = text.replacen("# view 2\n", "# view 2\n1 2 x 4\n", 1);
        assert!(matches!(parse_cameras(&bad), Err(Error::Parse { line: 7, .. })));
    }

    #[test]
    fn descriptor_round_trip_and_errors() {
        let d = SceneDescriptor::slanted_reference(64);
        assert_eq!(SceneDescriptor::parse(&d.to_toml()).unwrap(), d);

        let text = "width = 8\nheight = 8\nseed = 1\nbogus = 3\n";
        let err = SceneDescriptor::parse(text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");

        let mut bad = d.clone();
        bad.plane.normal = [0.0, 0.0, 2.0];
        assert!(bad.build().is_err());

        let mut aliased = d;
        aliased.texture[0].frequency = [40.0, 0.0, 0.0];
        assert!(aliased.build().unwrap_err().to_string().contains("band limit"));
    }

    #[test]
    fn reference_scene_is_band_limited() {
        for size in [16, 64] {
            let synth = SceneDescriptor::slanted_reference(size).build().unwrap();
            for cam in &synth.cameras {
                let f = texture_max_frequency(&synth.scene, &cam.intrinsics, &cam.world_pose, synth.dims).unwrap();
                assert!(f <= 0.25, "size {size}: {f}");
            }
        }
    }
}
