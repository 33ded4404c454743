//! Pose accuracy metrics: MPJPE, MRPE, PCK with its AUC, and the
//! elastic-net (L1 + squared L2) loss.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::AbsolutePose;

pub const DEFAULT_PCK_THRESHOLD_MM: f64 = 150.0;

/// Threshold sweep for the area under the PCK curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AucRange {
    pub max_mm: f64,
    pub step_mm: f64,
}

impl Default for AucRange {
    fn default() -> Self {
        Self {
            max_mm: 150.0,
            step_mm: 5.0,
        }
    }
}

impl AucRange {
    /// `0, step, 2·step, …` up to and including `max_mm`.
    pub fn thresholds(&self) -> Result<Vec<f64>> {
        if !(self.step_mm > 0.0 && self.max_mm >= 0.0) {
            return Err(Error::invalid(
                "AUC range needs a positive step and non-negative max",
            ));
        }
        let n = (self.max_mm / self.step_mm + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| i as f64 * self.step_mm).collect())
    }
}

fn check_pair(pred: &AbsolutePose, gt: &AbsolutePose, root: usize) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::invalid(format!(
            "joint count mismatch: {} predicted vs {} ground truth",
            pred.len(),
            gt.len()
        )));
    }
    if root >= gt.len() {
        return Err(Error::invalid(format!(
            "root index {root} out of range for {} joints",
            gt.len()
        )));
    }
    Ok(())
}

/// Per-joint errors after moving both roots to the origin.
pub fn root_relative_errors(
    pred: &AbsolutePose,
    gt: &AbsolutePose,
    root: usize,
) -> Result<Vec<f64>> {
    check_pair(pred, gt, root)?;
    let (pr, gr) = (pred.joints[root], gt.joints[root]);
    Ok(pred
        .joints
        .iter()
        .zip(&gt.joints)
        .map(|(p, g)| ((p - pr) - (g - gr)).norm())
        .collect())
}

/// Mean per-joint position error after root centering, mm.
pub fn mpjpe(pred: &AbsolutePose, gt: &AbsolutePose, root: usize) -> Result<f64> {
    let errors = root_relative_errors(pred, gt, root)?;
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

/// Distance between predicted and true root joints in camera coordinates, mm.
pub fn mrpe(pred: &AbsolutePose, gt: &AbsolutePose, root: usize) -> Result<f64> {
    check_pair(pred, gt, root)?;
    Ok((pred.joints[root] - gt.joints[root]).norm())
}

fn check_sets(pred: &[AbsolutePose], gt: &[AbsolutePose]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::invalid("empty pose set"));
    }
    if pred.len() != gt.len() {
        return Err(Error::invalid(format!(
            "{} predicted poses for {} ground-truth poses",
            pred.len(),
            gt.len()
        )));
    }
    Ok(())
}

/// Fraction of root-relative joint errors at or below `threshold_mm`, and
/// the mean of that fraction over the `auc` sweep.
pub fn pck_auc(
    pred: &[AbsolutePose],
    gt: &[AbsolutePose],
    threshold_mm: f64,
    auc: &AucRange,
    root: usize,
) -> Result<(f64, f64)> {
    check_sets(pred, gt)?;
    let mut errors = Vec::new();
    for (p, g) in pred.iter().zip(gt) {
        errors.extend(root_relative_errors(p, g, root)?);
    }
    let fraction = |t: f64| errors.iter().filter(|e| **e <= t).count() as f64 / errors.len() as f64;
    let thresholds = auc.thresholds()?;
    let area = thresholds.iter().map(|t| fraction(*t)).sum::<f64>() / thresholds.len() as f64;
    Ok((fraction(threshold_mm), area))
}

/// Mean over samples of `‖e‖₁ + ‖e‖₂²` with `e = pred − gt`.
pub fn elastic_net_loss<P: AsRef<[f64]>>(pred: &[P], gt: &[P]) -> Result<f64> {
    if pred.is_empty() || pred.len() != gt.len() {
        return Err(Error::invalid(format!(
            "elastic net needs matched non-empty samples ({} vs {})",
            pred.len(),
            gt.len()
        )));
    }
    let mut total = 0.0;
    for (i, (p, g)) in pred.iter().zip(gt).enumerate() {
        let (p, g) = (p.as_ref(), g.as_ref());
        if p.len() != g.len() {
            return Err(Error::invalid(format!(
                "sample {i}: {} vs {} components",
                p.len(),
                g.len()
            )));
        }
        total += p
            .iter()
            .zip(g)
            .map(|(a, b)| {
                let e = a - b;
                e.abs() + e * e
            })
            .sum::<f64>();
    }
    Ok(total / pred.len() as f64)
}

/// Elastic-net loss treating each pose as one flattened sample.
pub fn pose_elastic_net(pred: &[AbsolutePose], gt: &[AbsolutePose]) -> Result<f64> {
    check_sets(pred, gt)?;
    let flatten = |poses: &[AbsolutePose]| -> Vec<Vec<f64>> {
        poses
            .iter()
            .map(|p| p.joints.iter().flat_map(|j| [j.x, j.y, j.z]).collect())
            .collect()
    };
    elastic_net_loss(&flatten(pred), &flatten(gt))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Mpjpe,
    Mrpe,
    Pck,
    Auc,
    ElasticNet,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Mpjpe,
        Metric::Mrpe,
        Metric::Pck,
        Metric::Auc,
        Metric::ElasticNet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mpjpe => "mpjpe",
            Metric::Mrpe => "mrpe",
            Metric::Pck => "pck",
            Metric::Auc => "auc",
            Metric::ElasticNet => "elastic_net",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown metric {s:?}; expected one of mpjpe, mrpe, pck, auc, elastic_net"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub root_index: usize,
    pub pck_threshold_mm: f64,
    pub auc: AucRange,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            root_index: 0,
            pck_threshold_mm: DEFAULT_PCK_THRESHOLD_MM,
            auc: AucRange::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub frames: usize,
    pub joints: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mpjpe_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mrpe_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pck: Option<f64>,
    pub pck_threshold_mm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elastic_net: Option<f64>,
    /// Root-centered mean error per joint index, mm.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_joint_mpjpe_mm: Option<Vec<f64>>,
}

/// Computes the requested metrics over matched pose sequences.
pub fn evaluate(
    pred: &[AbsolutePose],
    gt: &[AbsolutePose],
    metrics: &[Metric],
    cfg: &EvalConfig,
) -> Result<MetricReport> {
    check_sets(pred, gt)?;
    let n_joints = gt[0].len();
    let wants = |m: Metric| metrics.contains(&m);
    let root = cfg.root_index;

    let mut report = MetricReport {
        frames: pred.len(),
        joints: n_joints,
        mpjpe_mm: None,
        mrpe_mm: None,
        pck: None,
        pck_threshold_mm: cfg.pck_threshold_mm,
        auc: None,
        elastic_net: None,
        per_joint_mpjpe_mm: None,
    };

    if wants(Metric::Mpjpe) {
        let mut per_joint = vec![0.0; n_joints];
        let mut total = 0.0;
        for (p, g) in pred.iter().zip(gt) {
            let errors = root_relative_errors(p, g, root)?;
            if errors.len() != n_joints {
                return Err(Error::invalid("joint count varies across frames"));
            }
            for (acc, e) in per_joint.iter_mut().zip(&errors) {
                *acc += e;
            }
            total += errors.iter().sum::<f64>() / n_joints as f64;
        }
        let n = pred.len() as f64;
        report.mpjpe_mm = Some(total / n);
        report.per_joint_mpjpe_mm = Some(per_joint.into_iter().map(|s| s / n).collect());
    }
    if wants(Metric::Mrpe) {
        let mut total = 0.0;
        for (p, g) in pred.iter().zip(gt) {
            total += mrpe(p, g, root)?;
        }
        report.mrpe_mm = Some(total / pred.len() as f64);
    }
    if wants(Metric::Pck) || wants(Metric::Auc) {
        let (pck, auc) = pck_auc(pred, gt, cfg.pck_threshold_mm, &cfg.auc, root)?;
        report.pck = wants(Metric::Pck).then_some(pck);
        report.auc = wants(Metric::Auc).then_some(auc);
    }
    if wants(Metric::ElasticNet) {
        report.elastic_net = Some(pose_elastic_net(pred, gt)?);
    }
    Ok(report)
}

impl MetricReport {
    /// Aligned plain-text rendering, values printed with 4 decimals.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("frames".into(), self.frames.to_string()),
            ("joints".into(), self.joints.to_string()),
        ];
        let mut push = |name: String, value: Option<f64>| {
            if let Some(v) = value {
                rows.push((name, format!("{v:.4}")));
            }
        };
        push("mpjpe_mm".into(), self.mpjpe_mm);
        push("mrpe_mm".into(), self.mrpe_mm);
        push(format!("pck@{}mm", self.pck_threshold_mm), self.pck);
        push("auc".into(), self.auc);
        push("elastic_net".into(), self.elastic_net);
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (name, value) in rows {
            let _ = writeln!(out, "{name:<width$}  {value:>14}");
        }
        out
    }
}
