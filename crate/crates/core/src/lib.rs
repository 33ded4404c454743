//! Absolute 3D human pose reconstruction from frustum-space predictions,
//! self-calibration of uncalibrated camera rigs and multi-view fusion.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod consensus;
pub mod decode;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod synth;

pub use consensus::{CalibrationSet, CameraCalibration, OptimizerConfig};
pub use error::{Error, Result};
pub use geometry::{AbsolutePose, CameraExtrinsics, CameraIntrinsics, FrustumJoint, FrustumPose};
