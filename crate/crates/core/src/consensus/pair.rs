//! Alternating calibration of a camera pair from matched frustum-space
//! predictions.
//!
//! Camera `a` is the target frame and camera `b` the source: the estimated
//! extrinsics map points of `b` into `a` via `R (x_b − T)`. Every substep
//! is a closed-form minimizer of the same objective in its own block of
//! variables, so the objective trace never increases. An update that would
//! raise it (through round-off or a rejected non-physical intrinsic value)
//! is discarded and counted.

use std::fmt;

use nalgebra::Vector3;

use super::closed_form::{
    objective_unchecked, optimal_center, optimal_focal, optimal_translation, procrustes_rotation,
};
use super::correspondence::{CorrespondenceSet, Track};
use crate::error::{Error, Result};
use crate::geometry::{CameraExtrinsics, CameraIntrinsics};

/// Minimum number of correspondences after confidence filtering.
pub const MIN_CORRESPONDENCES: usize = 3;

/// Principal points further than this many image sizes from the image
/// center (4× the image extent overall) are rejected.
const CENTER_BOUND_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub max_iter: usize,
    /// Early exit once a full update cycle improves the objective by less
    /// than this fraction.
    pub rel_tol: f64,
    pub conf_threshold: f64,
    pub init_focal_px: Option<f64>,
    pub init_center_px: Option<(f64, f64)>,
    /// Image `(width, height)` in pixels, used for default initialization
    /// and for bounding principal-point updates.
    pub image_size: Option<(f64, f64)>,
    pub freeze_intrinsics: bool,
    /// Multiply each correspondence by its confidences inside the objective.
    pub weighted: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            rel_tol: 1e-10,
            conf_threshold: 0.5,
            init_focal_px: None,
            init_center_px: None,
            image_size: None,
            freeze_intrinsics: false,
            weighted: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.conf_threshold) {
            return Err(Error::invalid(format!(
                "confidence threshold must lie in [0, 1], got {}",
                self.conf_threshold
            )));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(Error::invalid("relative tolerance must be non-negative"));
        }
        if let Some(f) = self.init_focal_px {
            if !(f > 0.0) {
                return Err(Error::invalid(format!(
                    "initial focal must be positive, got {f}"
                )));
            }
        }
        if let Some((w, h)) = self.image_size {
            if !(w > 0.0 && h > 0.0) {
                return Err(Error::invalid("image size must be positive"));
            }
        }
        Ok(())
    }

    /// Starting intrinsics: focal = max(width, height), center = image
    /// center, unless overridden.
    pub fn initial_intrinsics(&self) -> Result<CameraIntrinsics> {
        let focal = match (self.init_focal_px, self.image_size) {
            (Some(f), _) => f,
            (None, Some((w, h))) => w.max(h),
            (None, None) => {
                return Err(Error::invalid(
                    "no initial focal length: provide one or the image size",
                ))
            }
        };
        let (cx, cy) = match (self.init_center_px, self.image_size) {
            (Some(c), _) => c,
            (None, Some((w, h))) => (w / 2.0, h / 2.0),
            (None, None) => {
                return Err(Error::invalid(
                    "no initial principal point: provide one or the image size",
                ))
            }
        };
        CameraIntrinsics::new(focal, focal, cx, cy)
    }

    fn center_in_bounds(&self, value: f64, axis: usize) -> bool {
        match self.image_size {
            None => true,
            Some((w, h)) => {
                let extent = if axis == 0 { w } else { h };
                (value - extent / 2.0).abs() <= CENTER_BOUND_FACTOR * extent
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Substep {
    Init,
    Extrinsics,
    FocalA,
    FocalB,
    CenterA,
    CenterB,
}

impl Substep {
    pub fn as_str(self) -> &'static str {
        match self {
            Substep::Init => "init",
            Substep::Extrinsics => "extrinsics",
            Substep::FocalA => "focal_1",
            Substep::FocalB => "focal_2",
            Substep::CenterA => "center_1",
            Substep::CenterB => "center_2",
        }
    }

    /// Intrinsic block updated at `iteration`, round-robin.
    fn intrinsic_for(iteration: usize) -> Substep {
        match iteration % 4 {
            0 => Substep::FocalA,
            1 => Substep::FocalB,
            2 => Substep::CenterA,
            _ => Substep::CenterB,
        }
    }
}

impl fmt::Display for Substep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub substep: Substep,
    pub objective: f64,
    /// False when the update was discarded and the previous value kept.
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairCalibration {
    pub intrinsics_a: CameraIntrinsics,
    pub intrinsics_b: CameraIntrinsics,
    /// Maps camera `b` coordinates into camera `a`.
    pub extrinsics: CameraExtrinsics,
    pub trace: Vec<TraceEntry>,
    pub iterations: usize,
    pub converged: bool,
    pub rejected_updates: usize,
    pub correspondences: usize,
    pub total_weight: f64,
}

impl PairCalibration {
    pub fn final_objective(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |e| e.objective)
    }

    /// Root-mean-square per-joint cross-view residual, mm.
    pub fn rms_residual(&self) -> f64 {
        (self.final_objective() / self.total_weight).sqrt()
    }
}

/// Calibrates camera `b` against camera `a` from their tracks.
pub fn calibrate_pair(
    a: &Track,
    b: &Track,
    init_a: CameraIntrinsics,
    init_b: CameraIntrinsics,
    cfg: &OptimizerConfig,
) -> Result<PairCalibration> {
    cfg.validate()?;
    let set = CorrespondenceSet::from_tracks(a, b, cfg.conf_threshold, cfg.weighted)?;
    calibrate_correspondences(&set, init_a, init_b, cfg)
}

/// Runs the alternating optimization on an already-built correspondence set.
pub fn calibrate_correspondences(
    set: &CorrespondenceSet,
    init_a: CameraIntrinsics,
    init_b: CameraIntrinsics,
    cfg: &OptimizerConfig,
) -> Result<PairCalibration> {
    cfg.validate()?;
    init_a.validate()?;
    init_b.validate()?;
    let active = set.weights.iter().filter(|w| **w > 0.0).count();
    if active < MIN_CORRESPONDENCES {
        return Err(Error::degenerate(format!(
            "{active} correspondences after confidence filtering, need at least {MIN_CORRESPONDENCES}"
        )));
    }
    Solver::new(set, init_a, init_b, cfg)?.run()
}

struct Solver<'a> {
    set: &'a CorrespondenceSet,
    weights: Option<&'a [f64]>,
    cfg: &'a OptimizerConfig,
    k_a: CameraIntrinsics,
    k_b: CameraIntrinsics,
    x_a: Vec<Vector3<f64>>,
    x_b: Vec<Vector3<f64>>,
    ext: CameraExtrinsics,
    objective: f64,
    trace: Vec<TraceEntry>,
    rejected: usize,
}

impl<'a> Solver<'a> {
    fn new(
        set: &'a CorrespondenceSet,
        k_a: CameraIntrinsics,
        k_b: CameraIntrinsics,
        cfg: &'a OptimizerConfig,
    ) -> Result<Self> {
        let weights = set.weight_slice();
        let x_a = set.points_a(&k_a);
        let x_b = set.points_b(&k_b);
        let rotation = nalgebra::Matrix3::identity();
        let translation = optimal_translation(&x_a, &x_b, &rotation, weights)?;
        let ext = CameraExtrinsics {
            rotation,
            translation,
        };
        let objective = objective_unchecked(&x_a, &x_b, &ext, weights);
        let mut solver = Self {
            set,
            weights,
            cfg,
            k_a,
            k_b,
            x_a,
            x_b,
            ext,
            objective,
            trace: Vec::new(),
            rejected: 0,
        };
        solver.check_finite(0)?;
        solver.record(0, Substep::Init, true);
        Ok(solver)
    }

    fn run(mut self) -> Result<PairCalibration> {
        let cycle = if self.cfg.freeze_intrinsics { 1 } else { 4 };
        let mut end_of_iteration = vec![self.objective];
        let mut converged = false;
        let mut iterations = 0;

        for iter in 0..self.cfg.max_iter {
            self.update_extrinsics(iter)?;
            if !self.cfg.freeze_intrinsics {
                self.update_intrinsics(iter, Substep::intrinsic_for(iter))?;
            }
            iterations = iter + 1;
            end_of_iteration.push(self.objective);

            if self.objective == 0.0 {
                converged = true;
                break;
            }
            if iterations >= cycle {
                let before = end_of_iteration[iterations - cycle];
                if before - self.objective <= self.cfg.rel_tol * before {
                    converged = true;
                    break;
                }
            }
        }

        Ok(PairCalibration {
            intrinsics_a: self.k_a,
            intrinsics_b: self.k_b,
            extrinsics: self.ext,
            total_weight: self.set.weights.iter().sum(),
            correspondences: self.set.len(),
            trace: self.trace,
            iterations,
            converged,
            rejected_updates: self.rejected,
        })
    }

    fn record(&mut self, iteration: usize, substep: Substep, accepted: bool) {
        if !accepted {
            self.rejected += 1;
        }
        self.trace.push(TraceEntry {
            iteration,
            substep,
            objective: self.objective,
            accepted,
        });
    }

    fn check_finite(&self, iteration: usize) -> Result<()> {
        if !self.objective.is_finite() {
            return Err(Error::NumericalFailure {
                iteration,
                message: "objective is not finite".into(),
            });
        }
        Ok(())
    }

    fn evaluate(&self, x_a: &[Vector3<f64>], x_b: &[Vector3<f64>], ext: &CameraExtrinsics) -> f64 {
        objective_unchecked(x_a, x_b, ext, self.weights)
    }

    /// Procrustes rotation on the centered point sets followed by the
    /// mean-residual translation for that rotation.
    fn update_extrinsics(&mut self, iter: usize) -> Result<()> {
        let rotation = procrustes_rotation(&self.x_a, &self.x_b, self.weights)?;
        let translation = optimal_translation(&self.x_a, &self.x_b, &rotation, self.weights)?;
        let candidate = CameraExtrinsics {
            rotation,
            translation,
        };
        let value = self.evaluate(&self.x_a, &self.x_b, &candidate);
        if !value.is_finite() {
            return Err(Error::NumericalFailure {
                iteration: iter,
                message: "extrinsic update produced a non-finite objective".into(),
            });
        }
        let accepted = value <= self.objective;
        if accepted {
            self.ext = candidate;
            self.objective = value;
        }
        self.record(iter, Substep::Extrinsics, accepted);
        Ok(())
    }

    fn update_intrinsics(&mut self, iter: usize, substep: Substep) -> Result<()> {
        let on_a = matches!(substep, Substep::FocalA | Substep::CenterA);
        // Targets are the other camera's points expressed in this camera.
        let targets: Vec<Vector3<f64>> = if on_a {
            self.x_b.iter().map(|p| self.ext.apply(p)).collect()
        } else {
            let rt = self.ext.rotation.transpose();
            self.x_a
                .iter()
                .map(|p| rt * p + self.ext.translation)
                .collect()
        };
        let (sources, current) = if on_a {
            (&self.set.source_a, self.k_a)
        } else {
            (&self.set.source_b, self.k_b)
        };
        let u: Vec<f64> = sources.iter().map(|p| p.u).collect();
        let v: Vec<f64> = sources.iter().map(|p| p.v).collect();
        let z: Vec<f64> = sources.iter().map(|p| p.z).collect();
        let tx: Vec<f64> = targets.iter().map(|p| p.x).collect();
        let ty: Vec<f64> = targets.iter().map(|p| p.y).collect();

        let mut candidate = current;
        let mut physical = true;
        match substep {
            Substep::FocalA | Substep::FocalB => {
                let fx = optimal_focal(&u, &z, current.cx, &tx, self.weights)?;
                let fy = optimal_focal(&v, &z, current.cy, &ty, self.weights)?;
                if fx.is_finite() && fx > 0.0 {
                    candidate.fx = fx;
                } else {
                    physical = false;
                }
                if fy.is_finite() && fy > 0.0 {
                    candidate.fy = fy;
                } else {
                    physical = false;
                }
            }
            _ => {
                let cx = optimal_center(&u, &z, current.fx, &tx, self.weights)?;
                let cy = optimal_center(&v, &z, current.fy, &ty, self.weights)?;
                if cx.is_finite() && self.cfg.center_in_bounds(cx, 0) {
                    candidate.cx = cx;
                } else {
                    physical = false;
                }
                if cy.is_finite() && self.cfg.center_in_bounds(cy, 1) {
                    candidate.cy = cy;
                } else {
                    physical = false;
                }
            }
        }

        let rebuilt = if on_a {
            self.set.points_a(&candidate)
        } else {
            self.set.points_b(&candidate)
        };
        let value = if on_a {
            self.evaluate(&rebuilt, &self.x_b, &self.ext)
        } else {
            self.evaluate(&self.x_a, &rebuilt, &self.ext)
        };
        if !value.is_finite() {
            return Err(Error::NumericalFailure {
                iteration: iter,
                message: format!("{substep} update produced a non-finite objective"),
            });
        }
        let accepted = physical && value <= self.objective;
        if accepted || (value <= self.objective && candidate != current) {
            // A partially rejected update still applies its physical half.
            if on_a {
                self.k_a = candidate;
                self.x_a = rebuilt;
            } else {
                self.k_b = candidate;
                self.x_b = rebuilt;
            }
            self.objective = value;
        }
        self.record(iter, substep, accepted);
        Ok(())
    }
}
