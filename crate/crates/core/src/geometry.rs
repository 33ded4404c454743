//! Pinhole camera model, pose containers and rigid transforms between camera
//! frames.
//!
//! Lengths are millimeters and image coordinates are pixels throughout. The
//! camera model has no skew and no lens distortion.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Tolerance used when validating rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_JOINT_COUNT: usize = 17;

/// A single joint in frustum space: pixel coordinates plus metric depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrustumJoint {
    pub u: f64,
    pub v: f64,
    pub z: f64,
}

impl FrustumJoint {
    pub fn new(u: f64, v: f64, z: f64) -> Self {
        Self { u, v, z }
    }
}

/// Per-joint `(u, v, z)` prediction of one camera for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrustumPose {
    pub joints: Vec<FrustumJoint>,
}

impl FrustumPose {
    pub fn new(joints: Vec<FrustumJoint>) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::invalid("pose must have at least one joint"));
        }
        for (i, j) in joints.iter().enumerate() {
            if !(j.u.is_finite() && j.v.is_finite()) {
                return Err(Error::invalid(format!(
                    "joint {i}: non-finite pixel coordinate"
                )));
            }
            if !(j.z > 0.0) || !j.z.is_finite() {
                return Err(Error::invalid(format!(
                    "joint {i}: depth must be positive, got {}",
                    j.z
                )));
            }
        }
        Ok(Self { joints })
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }
}

/// Per-joint 3D positions in a camera frame, millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsolutePose {
    pub joints: Vec<Vector3<f64>>,
}

impl AbsolutePose {
    pub fn new(joints: Vec<Vector3<f64>>) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::invalid("pose must have at least one joint"));
        }
        if let Some(i) = joints.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("joint {i}: non-finite coordinate")));
        }
        Ok(Self { joints })
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    /// Same pose with every joint moved by `offset`.
    pub fn translated(&self, offset: &Vector3<f64>) -> Self {
        Self {
            joints: self.joints.iter().map(|p| p + offset).collect(),
        }
    }
}

/// Pinhole intrinsics: focal lengths and principal point, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::invalid(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::invalid("principal point must be finite"));
        }
        Ok(())
    }
}

/// Rigid transform from one camera frame into another: `x' = R (x - T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraExtrinsics {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraExtrinsics {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let e = Self {
            rotation,
            translation,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_rotation(&self.rotation)?;
        if !self.translation.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidExtrinsics("non-finite translation".into()));
        }
        Ok(())
    }

    /// Maps a single point from the source frame into the target frame.
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * (p - self.translation)
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        (self.rotation - Matrix3::identity()).amax() <= tol && self.translation.amax() <= tol
    }
}

/// Checks `RᵀR = I` and `det R = +1`, both to [`ROTATION_TOLERANCE`].
pub fn validate_rotation(r: &Matrix3<f64>) -> Result<()> {
    if !r.iter().all(|c| c.is_finite()) {
        return Err(Error::InvalidExtrinsics("non-finite rotation entry".into()));
    }
    let gram_err = (r.transpose() * r - Matrix3::identity()).amax();
    if gram_err > ROTATION_TOLERANCE {
        return Err(Error::InvalidExtrinsics(format!(
            "rotation is not orthogonal (max |RᵀR - I| = {gram_err:e})"
        )));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > ROTATION_TOLERANCE {
        return Err(Error::InvalidExtrinsics(format!(
            "rotation determinant is {det}, expected +1"
        )));
    }
    Ok(())
}

/// Angle of the relative rotation `Aᵀ B`, in radians.
pub fn rotation_angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let rel = a.transpose() * b;
    // atan2 stays accurate near zero where acos of the trace does not.
    let sin_vec = Vector3::new(
        rel[(2, 1)] - rel[(1, 2)],
        rel[(0, 2)] - rel[(2, 0)],
        rel[(1, 0)] - rel[(0, 1)],
    );
    let sin = 0.5 * sin_vec.norm();
    let cos = 0.5 * (rel.trace() - 1.0);
    sin.atan2(cos)
}

/// Back-projects a frustum joint to camera coordinates.
pub fn inverse_project(p: &FrustumJoint, k: &CameraIntrinsics) -> Result<Vector3<f64>> {
    k.validate()?;
    if !(p.z > 0.0) {
        return Err(Error::invalid(format!(
            "depth must be positive, got {}",
            p.z
        )));
    }
    Ok(inverse_project_unchecked(p, k))
}

#[inline]
pub(crate) fn inverse_project_unchecked(p: &FrustumJoint, k: &CameraIntrinsics) -> Vector3<f64> {
    Vector3::new((p.u - k.cx) / k.fx * p.z, (p.v - k.cy) / k.fy * p.z, p.z)
}

/// Projects a camera-frame point to pixel coordinates, keeping its depth.
pub fn project(x: &Vector3<f64>, k: &CameraIntrinsics) -> Result<FrustumJoint> {
    k.validate()?;
    if !(x.z > 0.0) {
        return Err(Error::invalid(format!(
            "point must be in front of the camera, got z={}",
            x.z
        )));
    }
    Ok(FrustumJoint {
        u: k.fx * x.x / x.z + k.cx,
        v: k.fy * x.y / x.z + k.cy,
        z: x.z,
    })
}

pub fn inverse_project_pose(p: &FrustumPose, k: &CameraIntrinsics) -> Result<AbsolutePose> {
    let joints = p
        .joints
        .iter()
        .map(|j| inverse_project(j, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(AbsolutePose { joints })
}

pub fn project_pose(x: &AbsolutePose, k: &CameraIntrinsics) -> Result<FrustumPose> {
    let joints = x
        .joints
        .iter()
        .map(|j| project(j, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(FrustumPose { joints })
}

/// Maps every joint through `R (x - T)`.
pub fn transform_pose(x: &AbsolutePose, e: &CameraExtrinsics) -> Result<AbsolutePose> {
    e.validate()?;
    Ok(AbsolutePose {
        joints: x.joints.iter().map(|p| e.apply(p)).collect(),
    })
}

/// The reverse transform, obtained by solving `x' = R (x - T)` for `x`.
pub fn invert_extrinsics(e: &CameraExtrinsics) -> Result<CameraExtrinsics> {
    e.validate()?;
    Ok(CameraExtrinsics {
        rotation: e.rotation.transpose(),
        translation: -(e.rotation * e.translation),
    })
}

/// Composition `outer ∘ inner`: first `inner`, then `outer`.
pub fn compose_extrinsics(outer: &CameraExtrinsics, inner: &CameraExtrinsics) -> CameraExtrinsics {
    // outer(inner(x)) = Ro Ri (x - Ti - Riᵀ To)
    CameraExtrinsics {
        rotation: outer.rotation * inner.rotation,
        translation: inner.translation + inner.rotation.transpose() * outer.translation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    fn k_500() -> CameraIntrinsics {
        CameraIntrinsics::new(1000.0, 1000.0, 500.0, 500.0).unwrap()
    }

    #[test]
    fn principal_point_ray() {
        let k = CameraIntrinsics::new(1234.0, 987.0, 320.0, 240.0).unwrap();
        let x = inverse_project(&FrustumJoint::new(320.0, 240.0, 3000.0), &k).unwrap();
        assert_eq!(x, Vector3::new(0.0, 0.0, 3000.0));
    }

    #[test]
    fn unit_offset_gives_x_equal_z() {
        let k = CameraIntrinsics::new(800.0, 900.0, 300.0, 200.0).unwrap();
        let x = inverse_project(&FrustumJoint::new(1100.0, 1100.0, 1500.0), &k).unwrap();
        assert_eq!(x, Vector3::new(1500.0, 1500.0, 1500.0));
    }

    #[test]
    fn hand_evaluated_back_projection() {
        let x = inverse_project(&FrustumJoint::new(820.0, 540.0, 4000.0), &k_500()).unwrap();
        assert_relative_eq!(x, Vector3::new(1280.0, 160.0, 4000.0), epsilon = 1e-12);
        let p = project(&Vector3::new(1280.0, 160.0, 4000.0), &k_500()).unwrap();
        assert_relative_eq!(p.u, 820.0, epsilon = 1e-12);
        assert_relative_eq!(p.v, 540.0, epsilon = 1e-12);
        assert_eq!(p.z, 4000.0);
    }

    #[test]
    fn optical_axis_projects_to_center() {
        let p = project(&Vector3::new(0.0, 0.0, 2500.0), &k_500()).unwrap();
        assert_eq!(p, FrustumJoint::new(500.0, 500.0, 2500.0));
    }

    #[test]
    fn rejects_bad_depth_and_focal() {
        assert!(inverse_project(&FrustumJoint::new(1.0, 1.0, 0.0), &k_500()).is_err());
        assert!(inverse_project(&FrustumJoint::new(1.0, 1.0, -5.0), &k_500()).is_err());
        let bad = CameraIntrinsics {
            fx: 0.0,
            fy: 10.0,
            cx: 0.0,
            cy: 0.0,
        };
        assert!(matches!(
            inverse_project(&FrustumJoint::new(1.0, 1.0, 1.0), &bad),
            Err(Error::InvalidInput(_))
        ));
        assert!(project(&Vector3::new(1.0, 1.0, 0.0), &k_500()).is_err());
        assert!(CameraIntrinsics::new(10.0, -1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn identity_and_pure_translation() {
        let pose = AbsolutePose::new(vec![
            Vector3::new(1.0, 2.0, 3.0),
            Vector3::new(-4.0, 5.0, 6.0),
        ])
        .unwrap();
        assert_eq!(
            transform_pose(&pose, &CameraExtrinsics::identity()).unwrap(),
            pose
        );
        let shift =
            CameraExtrinsics::new(Matrix3::identity(), Vector3::new(100.0, 0.0, 0.0)).unwrap();
        let moved = transform_pose(&pose, &shift).unwrap();
        for (a, b) in moved.joints.iter().zip(&pose.joints) {
            assert_eq!(a - b, Vector3::new(-100.0, 0.0, 0.0));
        }
    }

    #[test]
    fn quarter_turn_about_z() {
        // Counter-clockwise quarter turn: e_x -> e_y.
        let r = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let e = CameraExtrinsics::new(r, Vector3::zeros()).unwrap();
        let pose = AbsolutePose::new(vec![Vector3::new(1000.0, 0.0, 0.0)]).unwrap();
        let out = transform_pose(&pose, &e).unwrap();
        assert_eq!(out.joints[0], Vector3::new(0.0, 1000.0, 0.0));
    }

    #[test]
    fn rejects_non_rotation() {
        let scaled = Matrix3::identity() * 1.01;
        assert!(matches!(
            CameraExtrinsics::new(scaled, Vector3::zeros()),
            Err(Error::InvalidExtrinsics(_))
        ));
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(CameraExtrinsics::new(reflection, Vector3::zeros()).is_err());
        let bad = CameraExtrinsics {
            rotation: scaled,
            translation: Vector3::zeros(),
        };
        let pose = AbsolutePose::new(vec![Vector3::new(1.0, 0.0, 0.0)]).unwrap();
        assert!(transform_pose(&pose, &bad).is_err());
    }

    #[test]
    fn invert_identity() {
        let inv = invert_extrinsics(&CameraExtrinsics::identity()).unwrap();
        assert!(inv.is_identity(0.0));
    }

    #[test]
    fn small_rotation_angle_is_accurate() {
        let a = Rotation3::from_euler_angles(0.3, -0.2, 1.1).into_inner();
        let b = a * Rotation3::from_axis_angle(&Vector3::y_axis(), 3e-8).into_inner();
        assert_relative_eq!(rotation_angle_between(&a, &b), 3e-8, max_relative = 1e-6);
        let c = a * Rotation3::from_axis_angle(&Vector3::x_axis(), 2.5).into_inner();
        assert_relative_eq!(rotation_angle_between(&a, &c), 2.5, epsilon = 1e-12);
    }

    fn arb_extrinsics() -> impl Strategy<Value = CameraExtrinsics> {
        (
            -3.2..3.2f64,
            -1.5..1.5f64,
            -3.2..3.2f64,
            prop::array::uniform3(-5000.0..5000.0f64),
        )
            .prop_map(|(r, p, y, t)| CameraExtrinsics {
                rotation: Rotation3::from_euler_angles(r, p, y).into_inner(),
                translation: Vector3::from(t),
            })
    }

    proptest! {
        #[test]
        fn project_inverts_back_projection(
            u in -2000.0..4000.0f64, v in -2000.0..4000.0f64, z in 10.0..20000.0f64,
            fx in 100.0..5000.0f64, fy in 100.0..5000.0f64,
            cx in 0.0..2000.0f64, cy in 0.0..2000.0f64,
        ) {
            let k = CameraIntrinsics::new(fx, fy, cx, cy).unwrap();
            let q = FrustumJoint::new(u, v, z);
            let back = project(&inverse_project(&q, &k).unwrap(), &k).unwrap();
            let scale = u.abs().max(v.abs()).max(1.0);
            prop_assert!((back.u - u).abs() <= 1e-9 * scale);
            prop_assert!((back.v - v).abs() <= 1e-9 * scale);
            prop_assert_eq!(back.z, z);
        }

        #[test]
        fn inverse_extrinsics_round_trip(e in arb_extrinsics(), p in prop::array::uniform3(-5000.0..5000.0f64)) {
            let pose = AbsolutePose::new(vec![Vector3::from(p)]).unwrap();
            let inv = invert_extrinsics(&e).unwrap();
            let back = transform_pose(&transform_pose(&pose, &e).unwrap(), &inv).unwrap();
            prop_assert!((back.joints[0] - pose.joints[0]).amax() < 1e-9);
            let twice = invert_extrinsics(&inv).unwrap();
            prop_assert!((twice.rotation - e.rotation).amax() < 1e-12);
            prop_assert!((twice.translation - e.translation).amax() < 1e-9);
        }

        #[test]
        fn rotation_preserves_norm(e in arb_extrinsics(), a in prop::array::uniform3(-1e4..1e4f64)) {
            let a = Vector3::from(a);
            let rotated = e.rotation * a;
            prop_assert!((rotated.norm() - a.norm()).abs() <= 1e-9 * a.norm().max(1.0));
            // ‖a − Rb‖ = ‖Rᵀa − b‖
            let b = Vector3::new(a.z, -a.x, 0.5 * a.y);
            let lhs = (a - e.rotation * b).norm();
            let rhs = (e.rotation.transpose() * a - b).norm();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.max(1.0));
        }

        #[test]
        fn composition_matches_sequential_application(
            e1 in arb_extrinsics(), e2 in arb_extrinsics(), p in prop::array::uniform3(-5000.0..5000.0f64)
        ) {
            let p = Vector3::from(p);
            let seq = e2.apply(&e1.apply(&p));
            let comp = compose_extrinsics(&e2, &e1).apply(&p);
            prop_assert!((seq - comp).amax() < 1e-8);
        }
    }
}
