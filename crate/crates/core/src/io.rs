//! JSON interchange formats and the CSV iteration trace.
//!
//! Every loader validates the invariants of the types it produces, and every
//! writer goes through a temporary file that is renamed into place.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::consensus::{CalibrationSet, CameraCalibration, Observation, PairCalibration, Track};
use crate::decode::{decode_joint, DecodeConfig, DepthMap, Grid, JointHeatmap, JointMaps};
use crate::error::{Error, Result};
use crate::geometry::{
    AbsolutePose, CameraExtrinsics, CameraIntrinsics, FrustumJoint, FrustumPose,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub n_joints: usize,
    #[serde(default)]
    pub root_index: usize,
    #[serde(default)]
    pub joint_names: Vec<String>,
}

impl Skeleton {
    pub fn anonymous(n_joints: usize) -> Self {
        Self {
            n_joints,
            root_index: 0,
            joint_names: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_joints == 0 {
            return Err(Error::Validation("skeleton has no joints".into()));
        }
        if self.root_index >= self.n_joints {
            return Err(Error::Validation(format!(
                "root_index {} out of range for {} joints",
                self.root_index, self.n_joints
            )));
        }
        if !self.joint_names.is_empty() && self.joint_names.len() != self.n_joints {
            return Err(Error::Validation(format!(
                "{} joint names for {} joints",
                self.joint_names.len(),
                self.n_joints
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointRecord {
    pub u: f64,
    pub v: f64,
    pub z: f64,
    pub conf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub camera_id: String,
    pub joints: Vec<JointRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub observations: Vec<ObservationRecord>,
}

/// Per-camera frustum-space predictions for a sequence of frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosesFile {
    pub skeleton: Skeleton,
    pub cameras: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_size: Option<ImageSize>,
    pub frames: Vec<FrameRecord>,
}

impl PosesFile {
    pub fn validate(&self) -> Result<()> {
        self.skeleton.validate()?;
        let cameras: BTreeSet<&str> = self.cameras.iter().map(String::as_str).collect();
        if cameras.len() != self.cameras.len() {
            return Err(Error::Validation("duplicate camera id in cameras".into()));
        }
        if let Some(size) = self.image_size {
            if !(size.width > 0.0 && size.height > 0.0) {
                return Err(Error::Validation("image_size must be positive".into()));
            }
        }
        let mut frame_ids = BTreeSet::new();
        for frame in &self.frames {
            if !frame_ids.insert(frame.frame_id) {
                return Err(Error::Validation(format!(
                    "duplicate frame_id {}",
                    frame.frame_id
                )));
            }
            let mut seen = BTreeSet::new();
            for obs in &frame.observations {
                let ctx = || format!("frame {} camera {}", frame.frame_id, obs.camera_id);
                if !cameras.contains(obs.camera_id.as_str()) {
                    return Err(Error::Validation(format!(
                        "{}: camera not listed in cameras",
                        ctx()
                    )));
                }
                if !seen.insert(obs.camera_id.as_str()) {
                    return Err(Error::Validation(format!(
                        "{}: duplicate observation",
                        ctx()
                    )));
                }
                if obs.joints.len() != self.skeleton.n_joints {
                    return Err(Error::Validation(format!(
                        "{}: {} joints, skeleton has {}",
                        ctx(),
                        obs.joints.len(),
                        self.skeleton.n_joints
                    )));
                }
                for (j, rec) in obs.joints.iter().enumerate() {
                    if !(0.0..=1.0).contains(&rec.conf) {
                        return Err(Error::Validation(format!(
                            "{} joint {j}: conf outside [0, 1]",
                            ctx()
                        )));
                    }
                    if !(rec.z > 0.0) || !rec.z.is_finite() {
                        return Err(Error::Validation(format!(
                            "{} joint {j}: depth must be positive",
                            ctx()
                        )));
                    }
                    if !(rec.u.is_finite() && rec.v.is_finite()) {
                        return Err(Error::Validation(format!(
                            "{} joint {j}: non-finite pixel",
                            ctx()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Observations grouped per camera. Every listed camera gets a track,
    /// possibly empty.
    pub fn tracks(&self) -> Result<BTreeMap<String, Track>> {
        let mut tracks: BTreeMap<String, Track> = self
            .cameras
            .iter()
            .map(|c| (c.clone(), Track::new()))
            .collect();
        for frame in &self.frames {
            for obs in &frame.observations {
                let pose = FrustumPose::new(
                    obs.joints
                        .iter()
                        .map(|j| FrustumJoint::new(j.u, j.v, j.z))
                        .collect(),
                )?;
                let conf = obs.joints.iter().map(|j| j.conf).collect();
                tracks
                    .get_mut(&obs.camera_id)
                    .ok_or_else(|| Error::Validation(format!("unknown camera {}", obs.camera_id)))?
                    .insert(frame.frame_id, Observation::new(pose, conf)?);
            }
        }
        Ok(tracks)
    }

    /// Inverse of [`PosesFile::tracks`].
    pub fn from_tracks(
        skeleton: Skeleton,
        tracks: &BTreeMap<String, Track>,
        image_size: Option<ImageSize>,
    ) -> Self {
        let mut frames: BTreeMap<u64, Vec<ObservationRecord>> = BTreeMap::new();
        for (camera, track) in tracks {
            for (frame_id, obs) in track {
                let joints = obs
                    .pose
                    .joints
                    .iter()
                    .zip(&obs.confidences)
                    .map(|(j, c)| JointRecord {
                        u: j.u,
                        v: j.v,
                        z: j.z,
                        conf: *c,
                    })
                    .collect();
                frames
                    .entry(*frame_id)
                    .or_default()
                    .push(ObservationRecord {
                        camera_id: camera.clone(),
                        joints,
                    });
            }
        }
        Self {
            skeleton,
            cameras: tracks.keys().cloned().collect(),
            image_size,
            frames: frames
                .into_iter()
                .map(|(frame_id, observations)| FrameRecord {
                    frame_id,
                    observations,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub camera_id: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major 3×3 rotation into the reference camera.
    pub rotation: [f64; 9],
    /// Millimeters.
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibFile {
    pub reference_camera: String,
    pub cameras: Vec<CameraRecord>,
}

impl CalibFile {
    pub fn from_calibration(set: &CalibrationSet) -> Self {
        let cameras = set
            .cameras()
            .iter()
            .map(|(id, cam)| {
                let r = &cam.extrinsics.rotation;
                let t = &cam.extrinsics.translation;
                CameraRecord {
                    camera_id: id.clone(),
                    fx: cam.intrinsics.fx,
                    fy: cam.intrinsics.fy,
                    cx: cam.intrinsics.cx,
                    cy: cam.intrinsics.cy,
                    rotation: [
                        r[(0, 0)],
                        r[(0, 1)],
                        r[(0, 2)],
                        r[(1, 0)],
                        r[(1, 1)],
                        r[(1, 2)],
                        r[(2, 0)],
                        r[(2, 1)],
                        r[(2, 2)],
                    ],
                    translation: [t.x, t.y, t.z],
                }
            })
            .collect();
        Self {
            reference_camera: set.reference().to_string(),
            cameras,
        }
    }

    /// Validates every block and builds the calibration set.
    pub fn to_calibration(&self) -> Result<CalibrationSet> {
        let mut cameras = BTreeMap::new();
        for rec in &self.cameras {
            let validation =
                |e: Error| Error::Validation(format!("camera {}: {}", rec.camera_id, e.root()));
            let intrinsics =
                CameraIntrinsics::new(rec.fx, rec.fy, rec.cx, rec.cy).map_err(validation)?;
            let extrinsics = CameraExtrinsics::new(
                Matrix3::from_row_slice(&rec.rotation),
                Vector3::from(rec.translation),
            )
            .map_err(validation)?;
            let prev = cameras.insert(
                rec.camera_id.clone(),
                CameraCalibration {
                    intrinsics,
                    extrinsics,
                },
            );
            if prev.is_some() {
                return Err(Error::Validation(format!(
                    "duplicate camera {}",
                    rec.camera_id
                )));
            }
        }
        CalibrationSet::new(self.reference_camera.clone(), cameras)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsoluteFrameRecord {
    pub frame_id: u64,
    pub joints: Vec<PointRecord>,
}

/// Absolute 3D poses, one per frame, in the frame of `reference_camera`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsolutePosesFile {
    pub skeleton: Skeleton,
    pub reference_camera: String,
    pub frames: Vec<AbsoluteFrameRecord>,
}

impl AbsolutePosesFile {
    pub fn new(
        skeleton: Skeleton,
        reference_camera: String,
        poses: &BTreeMap<u64, AbsolutePose>,
    ) -> Self {
        let frames = poses
            .iter()
            .map(|(frame_id, pose)| AbsoluteFrameRecord {
                frame_id: *frame_id,
                joints: pose
                    .joints
                    .iter()
                    .map(|p| PointRecord {
                        x: p.x,
                        y: p.y,
                        z: p.z,
                    })
                    .collect(),
            })
            .collect();
        Self {
            skeleton,
            reference_camera,
            frames,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.skeleton.validate()?;
        let mut ids = BTreeSet::new();
        for f in &self.frames {
            if !ids.insert(f.frame_id) {
                return Err(Error::Validation(format!(
                    "duplicate frame_id {}",
                    f.frame_id
                )));
            }
            if f.joints.len() != self.skeleton.n_joints {
                return Err(Error::Validation(format!(
                    "frame {}: {} joints, skeleton has {}",
                    f.frame_id,
                    f.joints.len(),
                    self.skeleton.n_joints
                )));
            }
            if f.joints
                .iter()
                .any(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
            {
                return Err(Error::Validation(format!(
                    "frame {}: non-finite coordinate",
                    f.frame_id
                )));
            }
        }
        Ok(())
    }

    pub fn poses(&self) -> Result<BTreeMap<u64, AbsolutePose>> {
        self.frames
            .iter()
            .map(|f| {
                let joints = f
                    .joints
                    .iter()
                    .map(|p| Vector3::new(p.x, p.y, p.z))
                    .collect();
                Ok((f.frame_id, AbsolutePose::new(joints)?))
            })
            .collect()
    }
}

/// Placement of a map grid inside the image: `pixel = origin + scale · cell`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPlacement {
    #[serde(default)]
    pub u0: f64,
    #[serde(default)]
    pub v0: f64,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl Default for GridPlacement {
    fn default() -> Self {
        Self {
            u0: 0.0,
            v0: 0.0,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointMapsRecord {
    /// Rows of the heatmap (outer index is `v`).
    pub heatmap: Vec<Vec<f64>>,
    pub depth: Vec<Vec<f64>>,
    /// Overrides the observation-level activation for this joint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_z: Option<f64>,
    #[serde(default = "unit_conf")]
    pub conf: f64,
}

fn unit_conf() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapsObservation {
    pub camera_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<GridPlacement>,
    pub joints: Vec<JointMapsRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapsFrame {
    pub frame_id: u64,
    pub observations: Vec<MapsObservation>,
}

/// Network outputs per frame, camera and joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skeleton: Option<Skeleton>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_size: Option<ImageSize>,
    pub frames: Vec<MapsFrame>,
}

impl MapsFile {
    /// Decodes every joint into a [`PosesFile`]. Errors carry the frame,
    /// camera and joint index.
    pub fn decode(&self, cfg: &DecodeConfig) -> Result<PosesFile> {
        cfg.validate()?;
        let n_joints = match &self.skeleton {
            Some(s) => s.n_joints,
            None => self
                .frames
                .iter()
                .flat_map(|f| f.observations.first())
                .map(|o| o.joints.len())
                .next()
                .ok_or_else(|| Error::Validation("maps file has no observations".into()))?,
        };
        let skeleton = self
            .skeleton
            .clone()
            .unwrap_or_else(|| Skeleton::anonymous(n_joints));
        let mut cameras = BTreeSet::new();
        let mut frames = Vec::with_capacity(self.frames.len());
        for frame in &self.frames {
            let mut observations = Vec::new();
            for obs in &frame.observations {
                cameras.insert(obs.camera_id.clone());
                let place = obs.placement.unwrap_or_default();
                let mut joints = Vec::with_capacity(obs.joints.len());
                for (j, rec) in obs.joints.iter().enumerate() {
                    let ctx = |e: Error| {
                        Error::Validation(format!(
                            "frame {} camera {} joint {j}: {}",
                            frame.frame_id,
                            obs.camera_id,
                            e.root()
                        ))
                    };
                    let heatmap = Grid::from_rows(&rec.heatmap)
                        .and_then(JointHeatmap::new)
                        .map_err(ctx)?;
                    let depth = Grid::from_rows(&rec.depth)
                        .and_then(DepthMap::new)
                        .map_err(ctx)?;
                    let alpha = rec
                        .alpha_z
                        .or(obs.alpha_z)
                        .ok_or_else(|| ctx(Error::invalid("missing alpha_z")))?;
                    let decoded =
                        decode_joint(&JointMaps { heatmap, depth }, alpha, cfg).map_err(ctx)?;
                    joints.push(JointRecord {
                        u: place.u0 + place.scale * decoded.u,
                        v: place.v0 + place.scale * decoded.v,
                        z: decoded.z,
                        conf: rec.conf,
                    });
                }
                observations.push(ObservationRecord {
                    camera_id: obs.camera_id.clone(),
                    joints,
                });
            }
            frames.push(FrameRecord {
                frame_id: frame.frame_id,
                observations,
            });
        }
        let out = PosesFile {
            skeleton,
            cameras: cameras.into_iter().collect(),
            image_size: self.image_size,
            frames,
        };
        out.validate()?;
        Ok(out)
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

pub fn read_poses(path: &Path) -> Result<PosesFile> {
    let f: PosesFile = read_json(path)?;
    f.validate()?;
    Ok(f)
}

pub fn read_calib(path: &Path) -> Result<CalibFile> {
    let f: CalibFile = read_json(path)?;
    f.to_calibration()?;
    Ok(f)
}

pub fn read_absolute_poses(path: &Path) -> Result<AbsolutePosesFile> {
    let f: AbsolutePosesFile = read_json(path)?;
    f.validate()?;
    Ok(f)
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// CSV trace with columns `iteration,substep,objective,camera`, one row per
/// substep of every pair.
pub fn trace_csv(pairs: &BTreeMap<String, PairCalibration>) -> String {
    let mut out = String::from("iteration,substep,objective,camera\n");
    for (camera, pair) in pairs {
        for e in &pair.trace {
            out.push_str(&format!(
                "{},{},{:e},{}\n",
                e.iteration, e.substep, e.objective, camera
            ));
        }
    }
    out
}
