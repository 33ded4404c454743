//! Closed-form minimizers of the cross-view objective
//! `Σ wᵢ ‖x1ᵢ − R (x2ᵢ − T)‖²` in one block of variables at a time.
//!
//! Every function accepts optional per-point weights; `None` means unit
//! weights.

use nalgebra::{Matrix3, Vector3, SVD};

use crate::error::{Error, Result};
use crate::geometry::CameraExtrinsics;

/// Relative singular-value floor below which the cross-covariance is
/// treated as rank deficient.
const RANK_TOLERANCE: f64 = 1e-12;

fn weight(weights: Option<&[f64]>, i: usize) -> f64 {
    weights.map_or(1.0, |w| w[i])
}

fn check_lengths(n1: usize, n2: usize, weights: Option<&[f64]>) -> Result<()> {
    if n1 != n2 {
        return Err(Error::invalid(format!(
            "point sets differ in length ({n1} vs {n2})"
        )));
    }
    if let Some(w) = weights {
        if w.len() != n1 {
            return Err(Error::invalid(format!(
                "{} weights for {n1} points",
                w.len()
            )));
        }
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
    }
    Ok(())
}

fn total_weight(n: usize, weights: Option<&[f64]>) -> Result<f64> {
    let sum = weights.map_or(n as f64, |w| w.iter().sum());
    if !(sum > 0.0) {
        return Err(Error::invalid("empty point set or all weights zero"));
    }
    Ok(sum)
}

/// Squared (weighted) Frobenius norm of `x1 − R (x2 − T)`.
pub fn objective(
    x_c1: &[Vector3<f64>],
    x_c2: &[Vector3<f64>],
    e: &CameraExtrinsics,
    weights: Option<&[f64]>,
) -> Result<f64> {
    check_lengths(x_c1.len(), x_c2.len(), weights)?;
    if x_c1.is_empty() {
        return Err(Error::invalid("objective of an empty point set"));
    }
    Ok(objective_unchecked(x_c1, x_c2, e, weights))
}

pub(crate) fn objective_unchecked(
    x_c1: &[Vector3<f64>],
    x_c2: &[Vector3<f64>],
    e: &CameraExtrinsics,
    weights: Option<&[f64]>,
) -> f64 {
    x_c1.iter()
        .zip(x_c2)
        .enumerate()
        .map(|(i, (a, b))| weight(weights, i) * (a - e.apply(b)).norm_squared())
        .sum()
}

/// Translation minimizing the objective for a fixed rotation: the mean of
/// `x2ᵢ − Rᵀ x1ᵢ`.
pub fn optimal_translation(
    x_c1: &[Vector3<f64>],
    x_c2: &[Vector3<f64>],
    rotation: &Matrix3<f64>,
    weights: Option<&[f64]>,
) -> Result<Vector3<f64>> {
    check_lengths(x_c1.len(), x_c2.len(), weights)?;
    let total = total_weight(x_c1.len(), weights)?;
    let rt = rotation.transpose();
    let sum = x_c1
        .iter()
        .zip(x_c2)
        .enumerate()
        .fold(Vector3::zeros(), |acc, (i, (a, b))| {
            acc + weight(weights, i) * (b - rt * a)
        });
    Ok(sum / total)
}

fn centroid(points: &[Vector3<f64>], weights: Option<&[f64]>, total: f64) -> Vector3<f64> {
    points
        .iter()
        .enumerate()
        .fold(Vector3::zeros(), |acc, (i, p)| acc + weight(weights, i) * p)
        / total
}

/// Rotation in SO(3) minimizing `Σ wᵢ ‖(x1ᵢ − c1) − R (x2ᵢ − c2)‖²` where
/// `c1`, `c2` are the weighted centroids. Already-centered inputs are left
/// as they are.
pub fn procrustes_rotation(
    x_c1: &[Vector3<f64>],
    x_c2: &[Vector3<f64>],
    weights: Option<&[f64]>,
) -> Result<Matrix3<f64>> {
    check_lengths(x_c1.len(), x_c2.len(), weights)?;
    let active = weights.map_or(x_c1.len(), |w| w.iter().filter(|v| **v > 0.0).count());
    if active < 3 {
        return Err(Error::degenerate(format!(
            "Procrustes alignment needs at least 3 points, got {active}"
        )));
    }
    let total = total_weight(x_c1.len(), weights)?;
    let c1 = centroid(x_c1, weights, total);
    let c2 = centroid(x_c2, weights, total);

    // H = Σ w (x2 − c2)(x1 − c1)ᵀ; the optimum is R = V diag(1, 1, d) Uᵀ.
    let mut h = Matrix3::zeros();
    for (i, (a, b)) in x_c1.iter().zip(x_c2).enumerate() {
        h += weight(weights, i) * (b - c2) * (a - c1).transpose();
    }
    if !h.iter().all(|v| v.is_finite()) {
        return Err(Error::NumericalFailure {
            iteration: 0,
            message: "non-finite cross-covariance".into(),
        });
    }

    let svd = SVD::new(h, true, true);
    let s = svd.singular_values;
    if !(s[0] > 0.0) || s[1] <= RANK_TOLERANCE * s[0] {
        return Err(Error::degenerate(format!(
            "cross-covariance has rank < 2 (singular values {:e}, {:e}, {:e}); points are collinear",
            s[0], s[1], s[2]
        )));
    }
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested Vᵀ").transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    Ok(r)
}

/// Focal length minimizing `Σ wᵢ ((uᵢ − c) zᵢ / f − targetᵢ)²`, solved
/// linearly in `1/f`.
///
/// Returns the unconstrained optimum, which may be non-positive or
/// infinite on inconsistent data; callers decide whether to accept it.
pub fn optimal_focal(
    u: &[f64],
    z: &[f64],
    center: f64,
    target: &[f64],
    weights: Option<&[f64]>,
) -> Result<f64> {
    check_scalar_lengths(u, z, target, weights)?;
    let (mut aa, mut at) = (0.0, 0.0);
    for i in 0..u.len() {
        let a = (u[i] - center) * z[i];
        let w = weight(weights, i);
        aa += w * a * a;
        at += w * a * target[i];
    }
    if !(aa > 0.0) {
        return Err(Error::degenerate(
            "focal update: all pixel offsets from the principal point are zero",
        ));
    }
    // f' = (t·A)/(A·A), f = 1/f'
    Ok(aa / at)
}

/// Principal point minimizing `Σ wᵢ ((uᵢ − c) zᵢ / f − targetᵢ)²`.
pub fn optimal_center(
    u: &[f64],
    z: &[f64],
    focal: f64,
    target: &[f64],
    weights: Option<&[f64]>,
) -> Result<f64> {
    check_scalar_lengths(u, z, target, weights)?;
    if !(focal > 0.0) {
        return Err(Error::invalid(format!(
            "focal length must be positive, got {focal}"
        )));
    }
    let (mut bb, mut num) = (0.0, 0.0);
    for i in 0..u.len() {
        let b = z[i] / focal;
        let w = weight(weights, i);
        bb += w * b * b;
        num += w * (u[i] * b - target[i]) * b;
    }
    if !(bb > 0.0) {
        return Err(Error::degenerate("center update: all depths are zero"));
    }
    Ok(num / bb)
}

fn check_scalar_lengths(
    u: &[f64],
    z: &[f64],
    target: &[f64],
    weights: Option<&[f64]>,
) -> Result<()> {
    if u.is_empty() {
        return Err(Error::invalid("empty correspondence set"));
    }
    if u.len() != z.len() || u.len() != target.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} pixels, {} depths, {} targets",
            u.len(),
            z.len(),
            target.len()
        )));
    }
    check_lengths(u.len(), u.len(), weights)
}
