//! Metric depth recovery from two calibrated views.
//!
//! Relative depth fields are mapped to metric depth through the median
//! scene depth of a sparse reconstruction, `D = μ·exp(r)`, and refined by
//! minimizing a multi-scale photometric, structural, geometric-consistency
//! and edge-aware smoothness objective with Adam.

pub mod error;
pub mod eval;
pub mod geometry;
pub mod grid;
pub mod imaging;
pub mod io;
pub mod losses;
pub mod objective;
pub mod optim;
pub mod scale;
pub mod synth;

pub use error::{Error, Result};
pub use eval::{compute_metrics, median_align, EvalOptions, MetricReport};
pub use geometry::{relative_pose, CameraIntrinsics, Point3, ProjectionMap, RigidPose};
pub use grid::{Image, Raster, ScalarGrid, ValidityMask};
pub use losses::{LossWeights, SigmaMode};
pub use objective::{total_loss, total_loss_and_gradient, LossBreakdown, Objective, ScenePair, ViewData};
pub use optim::{finite_diff_check, optimize, GradCheckReport, OptimConfig, OptimOutcome, TrajectoryRecord};
pub use scale::{median_depth, scale_transform, DepthMap, MedianDepth, SparsePoint, SparsePointCloud};
pub use synth::{render_view, PlanarScene, SceneDescriptor, SyntheticScene};
