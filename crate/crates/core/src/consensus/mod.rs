//! Consensus-based self-calibration: alternating closed-form updates of
//! extrinsics and intrinsics that minimize the cross-view error between
//! the absolute poses predicted by two cameras.

mod closed_form;
mod correspondence;
mod pair;
mod rig;

use std::collections::BTreeMap;

pub use closed_form::{
    objective, optimal_center, optimal_focal, optimal_translation, procrustes_rotation,
};
pub use correspondence::{CorrespondenceSet, Observation, Track};
pub use pair::{
    calibrate_correspondences, calibrate_pair, OptimizerConfig, PairCalibration, Substep,
    TraceEntry, MIN_CORRESPONDENCES,
};
pub use rig::{calibrate_rig, RigCalibration};

use crate::error::{Error, Result};
use crate::geometry::{CameraExtrinsics, CameraIntrinsics, ROTATION_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraCalibration {
    pub intrinsics: CameraIntrinsics,
    /// Maps this camera's coordinates into the reference camera.
    pub extrinsics: CameraExtrinsics,
}

/// Intrinsics of every camera plus extrinsics relative to a reference
/// camera, whose own extrinsics are the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    reference: String,
    cameras: BTreeMap<String, CameraCalibration>,
}

impl CalibrationSet {
    pub fn new(reference: String, cameras: BTreeMap<String, CameraCalibration>) -> Result<Self> {
        let Some(r) = cameras.get(&reference) else {
            return Err(Error::Validation(format!(
                "reference camera {reference:?} missing from calibration"
            )));
        };
        if !r.extrinsics.is_identity(ROTATION_TOLERANCE) {
            return Err(Error::Validation(format!(
                "reference camera {reference:?} must have identity extrinsics"
            )));
        }
        for (id, cam) in &cameras {
            cam.intrinsics.validate().map_err(|e| e.for_camera(id))?;
            cam.extrinsics.validate().map_err(|e| e.for_camera(id))?;
        }
        Ok(Self { reference, cameras })
    }

    pub fn reference(&self) -> &str {
        &self.reference
    }

    pub fn cameras(&self) -> &BTreeMap<String, CameraCalibration> {
        &self.cameras
    }

    pub fn get(&self, camera: &str) -> Option<&CameraCalibration> {
        self.cameras.get(camera)
    }
}
