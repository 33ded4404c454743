//! Decoding of per-joint network maps into frustum-space joints.
//!
//! A joint is described by a probability heatmap over a `width × height`
//! grid, a normalized depth map on the same grid and a scalar activation for
//! the absolute depth of the person. Grid coordinates are zero-based with `u`
//! along columns and `v` along rows.

use crate::error::{Error, Result};
use crate::geometry::FrustumJoint;

/// Tolerance on the unit sum of a heatmap.
pub const HEATMAP_SUM_TOLERANCE: f64 = 1e-6;

/// Row-major grid of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("grid must be non-empty"));
        }
        if values.len() != width * height {
            return Err(Error::invalid(format!(
                "grid {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Builds a grid from rows (outer index is `v`).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::invalid("ragged grid rows"));
        }
        Self::new(width, height, rows.concat())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.width + u]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(u, v, value)` for every cell.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &val)| ((i % self.width) as f64, (i / self.width) as f64, val))
    }

    fn same_shape(&self, other: &Grid) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// One probability distribution over the grid for a single joint.
#[derive(Debug, Clone, PartialEq)]
pub struct JointHeatmap(Grid);

impl JointHeatmap {
    pub fn new(grid: Grid) -> Result<Self> {
        if let Some(i) = grid
            .values
            .iter()
            .position(|v| !(*v >= 0.0) || !v.is_finite())
        {
            return Err(Error::invalid(format!(
                "heatmap entry {i} is negative or non-finite"
            )));
        }
        let sum: f64 = grid.values.iter().sum();
        if (sum - 1.0).abs() > HEATMAP_SUM_TOLERANCE {
            return Err(Error::invalid(format!(
                "heatmap sums to {sum}, expected 1 within {HEATMAP_SUM_TOLERANCE:e}"
            )));
        }
        Ok(Self(grid))
    }

    pub fn grid(&self) -> &Grid {
        &self.0
    }
}

/// Normalized relative depth in `[0, 1]` per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap(Grid);

impl DepthMap {
    pub fn new(grid: Grid) -> Result<Self> {
        if let Some(i) = grid.values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!(
                "depth map entry {i} outside [0, 1]"
            )));
        }
        Ok(Self(grid))
    }

    pub fn grid(&self) -> &Grid {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    /// Maximum absolute depth, mm.
    pub rho: f64,
    /// Smoothing factor of the depth activation.
    pub beta: f64,
    /// Span of the relative depth interval around the person, mm.
    pub depth_range_mm: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            rho: 10_000.0,
            beta: 0.5,
            depth_range_mm: 2_000.0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.beta > 0.0 && self.depth_range_mm > 0.0) {
            return Err(Error::invalid(format!(
                "decode config needs positive rho, beta and depth range, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Affine map from `[0, 1]` onto `[-range/2, +range/2]` mm.
    pub fn lambda(&self, normalized: f64) -> f64 {
        (normalized - 0.5) * self.depth_range_mm
    }
}

/// Mean and standard deviation of the prediction error, mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceStats {
    pub mean_error_mm: f64,
    pub std_error_mm: f64,
}

/// Expected grid coordinates under the heatmap.
pub fn soft_argmax_2d(h: &JointHeatmap) -> (f64, f64) {
    h.grid()
        .cells()
        .fold((0.0, 0.0), |(su, sv), (u, v, p)| (su + u * p, sv + v * p))
}

/// Pools the depth map with the heatmap and maps the result to mm relative
/// to the person.
pub fn pool_relative_depth(d: &DepthMap, h: &JointHeatmap, cfg: &DecodeConfig) -> Result<f64> {
    cfg.validate()?;
    if !d.grid().same_shape(h.grid()) {
        return Err(Error::invalid(format!(
            "depth map is {}x{} but heatmap is {}x{}",
            d.grid().width,
            d.grid().height,
            h.grid().width,
            h.grid().height
        )));
    }
    let pooled: f64 = d
        .grid()
        .values
        .iter()
        .zip(&h.grid().values)
        .map(|(dv, hv)| dv * hv)
        .sum();
    Ok(cfg.lambda(pooled))
}

/// Absolute person depth `ρ / (1 + exp(β α))`, mm.
pub fn absolute_depth(alpha_z: f64, cfg: &DecodeConfig) -> f64 {
    cfg.rho / (1.0 + (cfg.beta * alpha_z).exp())
}

/// Absolute joint depth from the relative joint depth and the person depth.
pub fn compose_depth(relative_mm: f64, absolute_mm: f64) -> Result<f64> {
    let z = relative_mm + absolute_mm;
    if !(z > 0.0) {
        return Err(Error::invalid(format!(
            "composed depth {z} mm is not in front of the camera"
        )));
    }
    Ok(z)
}

/// Training target for the joint confidence. Errors below the mean score
/// above 0.5, errors above it score below 0.5.
pub fn confidence_ground_truth(error_mm: f64, stats: &ConfidenceStats) -> Result<f64> {
    if !(stats.std_error_mm > 0.0) {
        return Err(Error::invalid(format!(
            "error standard deviation must be positive, got {}",
            stats.std_error_mm
        )));
    }
    if !(error_mm >= 0.0) {
        return Err(Error::invalid(format!(
            "error must be non-negative, got {error_mm}"
        )));
    }
    Ok(1.0 / (1.0 + ((error_mm - stats.mean_error_mm) / stats.std_error_mm).exp()))
}

/// All maps for one joint.
#[derive(Debug, Clone)]
pub struct JointMaps {
    pub heatmap: JointHeatmap,
    pub depth: DepthMap,
}

/// Full decode of one joint: soft-argmax pixel position, pooled relative
/// depth and the person's absolute depth from `alpha_z`.
pub fn decode_joint(maps: &JointMaps, alpha_z: f64, cfg: &DecodeConfig) -> Result<FrustumJoint> {
    let (u, v) = soft_argmax_2d(&maps.heatmap);
    let rel = pool_relative_depth(&maps.depth, &maps.heatmap, cfg)?;
    let z = compose_depth(rel, absolute_depth(alpha_z, cfg))?;
    Ok(FrustumJoint { u, v, z })
}
