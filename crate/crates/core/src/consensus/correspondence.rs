use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{inverse_project_unchecked, CameraIntrinsics, FrustumJoint, FrustumPose};

/// One camera's prediction for one frame together with per-joint
/// confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub pose: FrustumPose,
    pub confidences: Vec<f64>,
}

impl Observation {
    pub fn new(pose: FrustumPose, confidences: Vec<f64>) -> Result<Self> {
        if confidences.len() != pose.len() {
            return Err(Error::invalid(format!(
                "{} confidences for {} joints",
                confidences.len(),
                pose.len()
            )));
        }
        if let Some(i) = confidences.iter().position(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid(format!(
                "joint {i}: confidence outside [0, 1]"
            )));
        }
        Ok(Self { pose, confidences })
    }

    /// Observation with every confidence set to 1.
    pub fn certain(pose: FrustumPose) -> Self {
        let confidences = vec![1.0; pose.len()];
        Self { pose, confidences }
    }
}

/// Observations of one camera keyed by frame id.
pub type Track = BTreeMap<u64, Observation>;

/// Matched joints from two cameras, aggregated over frames.
///
/// Only the raw `(u, v, z)` measurements are stored; camera-frame points
/// depend on the current intrinsics and are rebuilt on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pub source_a: Vec<FrustumJoint>,
    pub source_b: Vec<FrustumJoint>,
    pub weights: Vec<f64>,
}

impl CorrespondenceSet {
    /// Pairs up every joint seen by both cameras in the same frame, keeping
    /// only those where both confidences reach `threshold`. With `weighted`
    /// the weight is the product of the two confidences, otherwise 1.
    pub fn from_tracks(a: &Track, b: &Track, threshold: f64, weighted: bool) -> Result<Self> {
        let mut set = Self {
            source_a: Vec::new(),
            source_b: Vec::new(),
            weights: Vec::new(),
        };
        for (frame, obs_a) in a {
            let Some(obs_b) = b.get(frame) else { continue };
            if obs_a.pose.len() != obs_b.pose.len() {
                return Err(Error::invalid(format!(
                    "frame {frame}: joint counts differ ({} vs {})",
                    obs_a.pose.len(),
                    obs_b.pose.len()
                )));
            }
            for j in 0..obs_a.pose.len() {
                let (ca, cb) = (obs_a.confidences[j], obs_b.confidences[j]);
                if ca < threshold || cb < threshold {
                    continue;
                }
                set.source_a.push(obs_a.pose.joints[j]);
                set.source_b.push(obs_b.pose.joints[j]);
                set.weights.push(if weighted { ca * cb } else { 1.0 });
            }
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn points_a(&self, k: &CameraIntrinsics) -> Vec<Vector3<f64>> {
        self.source_a
            .iter()
            .map(|p| inverse_project_unchecked(p, k))
            .collect()
    }

    pub fn points_b(&self, k: &CameraIntrinsics) -> Vec<Vector3<f64>> {
        self.source_b
            .iter()
            .map(|p| inverse_project_unchecked(p, k))
            .collect()
    }

    /// Weights as an optional slice, `None` when all are 1.
    pub(crate) fn weight_slice(&self) -> Option<&[f64]> {
        if self.weights.iter().all(|w| *w == 1.0) {
            None
        } else {
            Some(&self.weights)
        }
    }
}
