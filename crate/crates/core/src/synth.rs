//! Synthetic multi-camera scenes with known calibration and poses.
//!
//! Cameras stand on a circle around the subject and look at its center.
//! Poses are random articulated point clouds: a binary-tree skeleton whose
//! bone lengths are drawn once per sequence and whose bone directions are
//! drawn per frame. The reference camera `cam0` defines the world frame of
//! the ground-truth poses.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::consensus::{CalibrationSet, CameraCalibration, Observation, Track};
use crate::decode::{confidence_ground_truth, ConfidenceStats};
use crate::error::{Error, Result};
use crate::geometry::{
    invert_extrinsics, project, AbsolutePose, CameraExtrinsics, CameraIntrinsics, FrustumPose,
};

/// Half side of the cube containing every joint, mm.
const SUBJECT_HALF_EXTENT: f64 = 1000.0;
/// Longest root-to-leaf chain allowed, mm.
const MAX_REACH: f64 = 700.0;
const BONE_RANGE: (f64, f64) = (100.0, 250.0);
const RADIUS_RANGE: (f64, f64) = (3500.0, 6000.0);
const FOCAL_RANGE: (f64, f64) = (900.0, 1100.0);
const MAX_FRAME_ATTEMPTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma_uv_px: f64,
    pub sigma_z_mm: f64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            sigma_uv_px: 0.0,
            sigma_z_mm: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub n_cameras: usize,
    pub n_frames: usize,
    pub n_joints: usize,
    pub noise: NoiseModel,
    /// Probability that a joint is occluded in a given view.
    pub occlusion_rate: f64,
    /// Noise multiplier applied to occluded joints.
    pub occlusion_noise_factor: f64,
    pub image_size: (f64, f64),
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_cameras: 4,
            n_frames: 100,
            n_joints: 17,
            noise: NoiseModel::none(),
            occlusion_rate: 0.0,
            occlusion_noise_factor: 10.0,
            image_size: (1000.0, 1000.0),
            seed: 0,
        }
    }
}

impl SceneConfig {
    fn validate(&self) -> Result<()> {
        if self.n_cameras < 1 || self.n_frames < 1 || self.n_joints < 1 {
            return Err(Error::invalid(
                "scene needs at least one camera, one frame and one joint",
            ));
        }
        if !(self.noise.sigma_uv_px >= 0.0 && self.noise.sigma_z_mm >= 0.0) {
            return Err(Error::invalid("noise levels must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.occlusion_rate) {
            return Err(Error::invalid("occlusion rate must lie in [0, 1]"));
        }
        if !(self.occlusion_noise_factor >= 0.0) {
            return Err(Error::invalid(
                "occlusion noise factor must be non-negative",
            ));
        }
        if !(self.image_size.0 > 0.0 && self.image_size.1 > 0.0) {
            return Err(Error::invalid("image size must be positive"));
        }
        Ok(())
    }
}

pub fn camera_id(index: usize) -> String {
    format!("cam{index}")
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    pub cameras: CalibrationSet,
    /// Ground-truth pose per frame, in the reference camera frame.
    pub poses: Vec<AbsolutePose>,
    pub parents: Vec<Option<usize>>,
}

impl SyntheticScene {
    /// Ground-truth pose of `frame` expressed in `camera`'s own frame.
    pub fn pose_in_camera(&self, frame: usize, camera: &str) -> Result<AbsolutePose> {
        let cam = self
            .cameras
            .get(camera)
            .ok_or_else(|| Error::invalid(format!("unknown camera {camera:?}")))?;
        let to_camera = invert_extrinsics(&cam.extrinsics)?;
        crate::geometry::transform_pose(&self.poses[frame], &to_camera)
    }
}

#[derive(Debug, Clone)]
pub struct SceneObservations {
    pub tracks: BTreeMap<String, Track>,
    /// Occlusion flag per camera, frame and joint.
    pub occluded: BTreeMap<String, Vec<Vec<bool>>>,
}

/// Parent of every joint in a binary-tree skeleton rooted at joint 0.
pub fn tree_parents(n_joints: usize) -> Vec<Option<usize>> {
    (0..n_joints)
        .map(|i| if i == 0 { None } else { Some((i - 1) / 2) })
        .collect()
}

fn tree_depth(n_joints: usize) -> usize {
    (usize::BITS - n_joints.leading_zeros()) as usize - 1
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n: f64 = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// World-to-camera rotation for a camera at `position` looking at `target`,
/// with +y pointing down.
fn look_at(position: &Vector3<f64>, target: &Vector3<f64>) -> Matrix3<f64> {
    let forward = (target - position).normalize();
    let down = Vector3::new(0.0, 1.0, 0.0);
    let right = down.cross(&forward).normalize();
    let new_down = forward.cross(&right);
    Matrix3::from_rows(&[right.transpose(), new_down.transpose(), forward.transpose()])
}

struct StudioCamera {
    intrinsics: CameraIntrinsics,
    rotation: Matrix3<f64>,
    position: Vector3<f64>,
}

impl StudioCamera {
    fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * (p - self.position)
    }
}

/// Generates a scene and the per-camera observations of it. Identical
/// configurations give bit-identical output.
pub fn generate_scene(cfg: &SceneConfig) -> Result<(SyntheticScene, SceneObservations)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (width, height) = cfg.image_size;

    let studio: Vec<StudioCamera> = (0..cfg.n_cameras)
        .map(|i| {
            let angle = std::f64::consts::TAU * i as f64 / cfg.n_cameras as f64
                + rng.gen_range(-0.15..0.15);
            let radius = rng.gen_range(RADIUS_RANGE.0..RADIUS_RANGE.1);
            let position = Vector3::new(
                radius * angle.sin(),
                rng.gen_range(-2500.0..500.0),
                -radius * angle.cos(),
            );
            let aim = Vector3::new(
                rng.gen_range(-100.0..100.0),
                rng.gen_range(-100.0..100.0),
                rng.gen_range(-100.0..100.0),
            );
            let fx = rng.gen_range(FOCAL_RANGE.0..FOCAL_RANGE.1);
            let fy = fx * rng.gen_range(0.98..1.02);
            let cx = width / 2.0 + rng.gen_range(-20.0..20.0);
            let cy = height / 2.0 + rng.gen_range(-20.0..20.0);
            StudioCamera {
                intrinsics: CameraIntrinsics { fx, fy, cx, cy },
                rotation: look_at(&position, &aim),
                position,
            }
        })
        .collect();

    let parents = tree_parents(cfg.n_joints);
    let depth = tree_depth(cfg.n_joints).max(1);
    let bone_scale = (MAX_REACH / (depth as f64 * BONE_RANGE.1)).min(1.0);
    let bones: Vec<f64> = (0..cfg.n_joints)
        .map(|_| bone_scale * rng.gen_range(BONE_RANGE.0..BONE_RANGE.1))
        .collect();
    let root_extent = SUBJECT_HALF_EXTENT - MAX_REACH;

    let in_view = |cam: &StudioCamera, p: &Vector3<f64>| -> bool {
        let x = cam.to_camera(p);
        match project(&x, &cam.intrinsics) {
            Ok(q) => q.u >= 0.0 && q.u <= width && q.v >= 0.0 && q.v <= height,
            Err(_) => false,
        }
    };

    let mut world_poses = Vec::with_capacity(cfg.n_frames);
    for frame in 0..cfg.n_frames {
        let mut accepted = None;
        for _ in 0..MAX_FRAME_ATTEMPTS {
            let root = Vector3::new(
                rng.gen_range(-root_extent..root_extent),
                rng.gen_range(-root_extent..root_extent),
                rng.gen_range(-root_extent..root_extent),
            );
            let mut joints = vec![root; cfg.n_joints];
            for j in 1..cfg.n_joints {
                let p = parents[j].expect("non-root joint has a parent");
                joints[j] = joints[p] + bones[j] * random_unit(&mut rng);
            }
            if studio.iter().all(|c| joints.iter().all(|p| in_view(c, p))) {
                accepted = Some(joints);
                break;
            }
        }
        let joints = accepted.ok_or_else(|| {
            Error::invalid(format!(
                "frame {frame}: could not place the subject inside every camera's view"
            ))
        })?;
        world_poses.push(joints);
    }

    // Ground-truth calibration relative to camera 0.
    let reference = &studio[0];
    let mut cameras = BTreeMap::new();
    for (i, cam) in studio.iter().enumerate() {
        let extrinsics = if i == 0 {
            CameraExtrinsics::identity()
        } else {
            CameraExtrinsics {
                rotation: reference.rotation * cam.rotation.transpose(),
                translation: cam.rotation * (reference.position - cam.position),
            }
        };
        cameras.insert(
            camera_id(i),
            CameraCalibration {
                intrinsics: cam.intrinsics,
                extrinsics,
            },
        );
    }
    let calibration = CalibrationSet::new(camera_id(0), cameras)?;

    let poses = world_poses
        .iter()
        .map(|joints| AbsolutePose::new(joints.iter().map(|p| reference.to_camera(p)).collect()))
        .collect::<Result<Vec<_>>>()?;

    let uv_noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut tracks = BTreeMap::new();
    let mut occluded = BTreeMap::new();
    for (i, cam) in studio.iter().enumerate() {
        let k = cam.intrinsics;
        let mut track = Track::new();
        let mut flags = Vec::with_capacity(cfg.n_frames);
        for (frame, joints) in world_poses.iter().enumerate() {
            let mut observed = Vec::with_capacity(cfg.n_joints);
            let mut confidences = Vec::with_capacity(cfg.n_joints);
            let mut frame_flags = Vec::with_capacity(cfg.n_joints);
            for p in joints {
                let x = cam.to_camera(p);
                let clean = project(&x, &k)?;
                let hidden = rng.gen_bool(cfg.occlusion_rate);
                let m = if hidden {
                    cfg.occlusion_noise_factor
                } else {
                    1.0
                };
                let du: f64 = uv_noise.sample(&mut rng);
                let dv: f64 = uv_noise.sample(&mut rng);
                let dz: f64 = uv_noise.sample(&mut rng);
                let mut noisy = clean;
                noisy.u += m * cfg.noise.sigma_uv_px * du;
                noisy.v += m * cfg.noise.sigma_uv_px * dv;
                noisy.z += m * cfg.noise.sigma_z_mm * dz;
                if !(noisy.z > 0.0) {
                    noisy.z = clean.z;
                }
                let back = crate::geometry::inverse_project(&noisy, &k)?;
                let error = (back - x).norm();
                confidences.push(simulated_confidence(error, &x, &k, &cfg.noise, hidden)?);
                observed.push(noisy);
                frame_flags.push(hidden);
            }
            let obs = Observation::new(FrustumPose::new(observed)?, confidences)?;
            track.insert(frame as u64, obs);
            flags.push(frame_flags);
        }
        tracks.insert(camera_id(i), track);
        occluded.insert(camera_id(i), flags);
    }

    Ok((
        SyntheticScene {
            config: cfg.clone(),
            cameras: calibration,
            poses,
            parents,
        },
        SceneObservations { tracks, occluded },
    ))
}

/// Confidence derived from the injected error through the confidence
/// target, then folded into `(0.5, 1)` for visible joints and `(0, 0.5)` for
/// occluded ones.
fn simulated_confidence(
    error: f64,
    x: &Vector3<f64>,
    k: &CameraIntrinsics,
    noise: &NoiseModel,
    occluded: bool,
) -> Result<f64> {
    let sx = noise.sigma_uv_px * x.z / k.fx;
    let sy = noise.sigma_uv_px * x.z / k.fy;
    let expected = (sx * sx + sy * sy + noise.sigma_z_mm * noise.sigma_z_mm).sqrt();
    let stats = ConfidenceStats {
        mean_error_mm: 2.0 * expected,
        std_error_mm: expected.max(1e-3),
    };
    let raw = confidence_ground_truth(error, &stats)?;
    Ok(if occluded { 0.5 * raw } else { 0.5 + 0.5 * raw })
}
