//! Confidence-weighted fusion of per-view absolute poses that are already
//! expressed in a common (reference camera) frame.

use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::consensus::{CalibrationSet, Track};
use crate::error::{Error, Result};
use crate::geometry::{inverse_project_pose, transform_pose, AbsolutePose};

#[derive(Debug, Clone, PartialEq)]
pub struct ViewPrediction {
    pub camera_id: String,
    pub pose: AbsolutePose,
    pub confidences: Vec<f64>,
}

impl ViewPrediction {
    pub fn new(
        camera_id: impl Into<String>,
        pose: AbsolutePose,
        confidences: Vec<f64>,
    ) -> Result<Self> {
        let camera_id = camera_id.into();
        if confidences.len() != pose.len() {
            return Err(Error::invalid(format!(
                "view {camera_id}: {} confidences for {} joints",
                confidences.len(),
                pose.len()
            )));
        }
        if confidences.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid(format!(
                "view {camera_id}: confidence outside [0, 1]"
            )));
        }
        Ok(Self {
            camera_id,
            pose,
            confidences,
        })
    }
}

/// Per joint, the confidence-weighted mean over views whose confidence
/// reaches `threshold`. When no view passes for a joint, every view
/// contributes with its confidence as weight; when all of those are zero
/// the plain mean is used.
pub fn fuse_views(views: &[ViewPrediction], threshold: f64) -> Result<AbsolutePose> {
    let first = views
        .first()
        .ok_or_else(|| Error::invalid("cannot fuse an empty list of views"))?;
    let n_joints = first.pose.len();
    if let Some(v) = views.iter().find(|v| v.pose.len() != n_joints) {
        return Err(Error::invalid(format!(
            "view {} has {} joints, expected {n_joints}",
            v.camera_id,
            v.pose.len()
        )));
    }

    let weighted_mean = |j: usize, keep: &dyn Fn(f64) -> bool| -> Option<Vector3<f64>> {
        let (sum, total) = views.iter().filter(|v| keep(v.confidences[j])).fold(
            (Vector3::zeros(), 0.0),
            |(s, t), v| {
                let w = v.confidences[j];
                (s + w * v.pose.joints[j], t + w)
            },
        );
        (total > 0.0).then(|| sum / total)
    };

    let joints = (0..n_joints)
        .map(|j| {
            weighted_mean(j, &|c| c >= threshold)
                .or_else(|| weighted_mean(j, &|_| true))
                .unwrap_or_else(|| {
                    views.iter().map(|v| v.pose.joints[j]).sum::<Vector3<f64>>()
                        / views.len() as f64
                })
        })
        .collect();
    AbsolutePose::new(joints)
}

/// Lifts every observation into the reference camera frame and fuses the
/// views of each frame. Every camera with observations must be calibrated.
pub fn fuse_tracks(
    tracks: &BTreeMap<String, Track>,
    calibration: &CalibrationSet,
    threshold: f64,
) -> Result<BTreeMap<u64, AbsolutePose>> {
    let mut per_frame: BTreeMap<u64, Vec<ViewPrediction>> = BTreeMap::new();
    for (camera, track) in tracks {
        if track.is_empty() {
            continue;
        }
        let cam = calibration
            .get(camera)
            .ok_or_else(|| Error::Validation(format!("camera {camera} has no calibration")))?;
        for (frame, obs) in track {
            let local = inverse_project_pose(&obs.pose, &cam.intrinsics)
                .map_err(|e| e.for_camera(camera))?;
            let pose = transform_pose(&local, &cam.extrinsics)?;
            per_frame
                .entry(*frame)
                .or_default()
                .push(ViewPrediction::new(
                    camera.clone(),
                    pose,
                    obs.confidences.clone(),
                )?);
        }
    }
    per_frame
        .into_iter()
        .map(|(frame, views)| Ok((frame, fuse_views(&views, threshold)?)))
        .collect()
}
