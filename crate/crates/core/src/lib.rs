//! Building blocks for single-stage, keypoint-based monocular 3D object
//! detection.
//!
//! Objects are represented by the projection of their 3D center on the image
//! plane (a heatmap keypoint) plus an 8-value regression tuple from which the
//! full 7-DoF box is lifted in closed form.
//!
//! * [`geometry`] - projection, unprojection, residual decodings, angle
//!   conventions and box corners.
//! * [`codec`] - ground truth to heatmap/regression targets and back.
//! * [`losses`] - penalty-reduced focal loss and the disentangled corner loss,
//!   with exact gradients and a finite-difference checker.
//! * [`kitti`] - KITTI label, calibration and detection files.
//! * [`metrics`] - rotated-box IoU, AP at 11/40 recall points, depth error.
//! * [`exec`] - sequential/parallel execution switch used by batch loops.

pub mod codec;
pub mod exec;
pub mod geometry;
pub mod kitti;
pub mod losses;
pub mod metrics;
pub mod raster;

pub use codec::{CodecConfig, Detection, Heatmap, RegressionMap, RegressionTuple, TargetSet};
pub use exec::Execution;
pub use geometry::{Box3D, CameraProjection, CornerSet, Dimensions};
