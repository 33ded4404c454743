use std::collections::BTreeMap;

use super::correspondence::Track;
use super::pair::{calibrate_pair, OptimizerConfig, PairCalibration};
use super::{CalibrationSet, CameraCalibration};
use crate::error::{Error, Result};
use crate::geometry::{CameraExtrinsics, CameraIntrinsics};

#[derive(Debug, Clone, PartialEq)]
pub struct RigCalibration {
    pub calibration: CalibrationSet,
    /// Per non-reference camera, the pair run against the reference.
    pub pairs: BTreeMap<String, PairCalibration>,
}

/// Calibrates every camera against `reference` (star topology).
///
/// Pairs are solved independently and concurrently. The reference camera's
/// intrinsics come out of every pair and are averaged. `initial` supplies
/// per-camera starting intrinsics; cameras missing from it start from
/// [`OptimizerConfig::initial_intrinsics`].
pub fn calibrate_rig(
    tracks: &BTreeMap<String, Track>,
    reference: &str,
    initial: &BTreeMap<String, CameraIntrinsics>,
    cfg: &OptimizerConfig,
) -> Result<RigCalibration> {
    cfg.validate()?;
    if tracks.len() < 2 {
        return Err(Error::invalid(format!(
            "calibration needs at least 2 cameras, got {}",
            tracks.len()
        )));
    }
    let ref_track = tracks
        .get(reference)
        .ok_or_else(|| Error::invalid(format!("reference camera {reference:?} not found")))?;

    let init_for = |id: &str| -> Result<CameraIntrinsics> {
        match initial.get(id) {
            Some(k) => Ok(*k),
            None => cfg.initial_intrinsics().map_err(|e| e.for_camera(id)),
        }
    };
    let init_ref = init_for(reference)?;
    let others: Vec<(&String, &Track, CameraIntrinsics)> = tracks
        .iter()
        .filter(|(id, _)| id.as_str() != reference)
        .map(|(id, t)| Ok((id, t, init_for(id)?)))
        .collect::<Result<_>>()?;

    let results: Vec<(String, Result<PairCalibration>)> = std::thread::scope(|s| {
        let handles: Vec<_> = others
            .iter()
            .map(|(id, track, init)| {
                let init = *init;
                s.spawn(move || {
                    let out = calibrate_pair(ref_track, track, init_ref, init, cfg);
                    ((*id).clone(), out)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("pair calibration thread panicked"))
            .collect()
    });

    let mut pairs = BTreeMap::new();
    for (id, res) in results {
        let pair = res.map_err(|e| e.for_camera(&id))?;
        pairs.insert(id, pair);
    }

    let n = pairs.len() as f64;
    let mean = |f: fn(&CameraIntrinsics) -> f64| {
        pairs.values().map(|p| f(&p.intrinsics_a)).sum::<f64>() / n
    };
    let ref_intrinsics = CameraIntrinsics::new(
        mean(|k| k.fx),
        mean(|k| k.fy),
        mean(|k| k.cx),
        mean(|k| k.cy),
    )
    .map_err(|e| e.for_camera(reference))?;

    let mut cameras = BTreeMap::new();
    cameras.insert(
        reference.to_string(),
        CameraCalibration {
            intrinsics: ref_intrinsics,
            extrinsics: CameraExtrinsics::identity(),
        },
    );
    for (id, pair) in &pairs {
        pair.extrinsics.validate().map_err(|e| e.for_camera(id))?;
        cameras.insert(
            id.clone(),
            CameraCalibration {
                intrinsics: pair.intrinsics_b,
                extrinsics: pair.extrinsics,
            },
        );
    }

    Ok(RigCalibration {
        calibration: CalibrationSet::new(reference.to_string(), cameras)?,
        pairs,
    })
}
