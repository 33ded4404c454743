use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mvpose::consensus::calibrate_rig;
use mvpose::decode::DecodeConfig;
use mvpose::fusion::fuse_tracks;
use mvpose::io::{
    read_absolute_poses, read_calib, read_json, read_poses, trace_csv, write_atomic, write_json,
    AbsolutePosesFile, CalibFile, ImageSize, MapsFile, PosesFile, Skeleton,
};
use mvpose::metrics::{evaluate, EvalConfig, Metric};
use mvpose::synth::{camera_id, generate_scene, NoiseModel, SceneConfig};
use mvpose::{Error, OptimizerConfig};

#[derive(Parser)]
#[command(
    name = "mvpose",
    version,
    about = "Multi-view absolute 3D pose estimation and rig self-calibration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic rig, ground truth and noisy observations.
    Synth(SynthArgs),
    /// Self-calibrate a rig from per-camera pose predictions.
    Calibrate(CalibrateArgs),
    /// Fuse per-camera predictions into one absolute pose per frame.
    Fuse(FuseArgs),
    /// Compare predicted absolute poses with ground truth.
    Evaluate(EvaluateArgs),
    /// Decode heatmaps and depth maps into frustum-space poses.
    Decode(DecodeArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    cameras: usize,
    #[arg(long, default_value_t = 100)]
    frames: usize,
    #[arg(long, default_value_t = 17)]
    joints: usize,
    #[arg(long, default_value_t = 0.0)]
    noise_uv_px: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_z_mm: f64,
    /// Per-joint, per-view occlusion probability.
    #[arg(long, default_value_t = 0.0)]
    occlusion: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Image size as WIDTHxHEIGHT pixels.
    #[arg(long, value_parser = parse_size, default_value = "1000x1000")]
    image_size: (f64, f64),
    #[arg(long)]
    out_poses: PathBuf,
    #[arg(long)]
    out_gt_calib: PathBuf,
    #[arg(long)]
    out_gt_poses: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    poses: PathBuf,
    /// Reference camera; defaults to the first camera listed in the poses file.
    #[arg(long)]
    ref_camera: Option<String>,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-10)]
    rel_tol: f64,
    #[arg(long, default_value_t = 0.5)]
    conf_threshold: f64,
    /// Initial focal length in pixels for every camera.
    #[arg(long)]
    init_focal: Option<f64>,
    /// Initial principal point as CX,CY pixels for every camera.
    #[arg(long, value_parser = parse_pair)]
    init_center: Option<(f64, f64)>,
    /// Take per-camera starting intrinsics from a calibration file.
    #[arg(long)]
    init_calib: Option<PathBuf>,
    /// Image size as WIDTHxHEIGHT; overrides the poses file.
    #[arg(long, value_parser = parse_size)]
    image_size: Option<(f64, f64)>,
    #[arg(long)]
    freeze_intrinsics: bool,
    /// Weight correspondences by the product of their confidences.
    #[arg(long)]
    weighted: bool,
    #[arg(long)]
    out: PathBuf,
    /// Per-substep objective trace (CSV).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct FuseArgs {
    #[arg(long)]
    poses: PathBuf,
    #[arg(long)]
    calib: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    conf_threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Comma-separated subset of mpjpe, mrpe, pck, auc, elastic_net.
    #[arg(long, value_delimiter = ',', default_value = "mpjpe,mrpe,pck,auc")]
    metrics: Vec<Metric>,
    #[arg(long, default_value_t = mvpose::metrics::DEFAULT_PCK_THRESHOLD_MM)]
    pck_threshold: f64,
    /// Also write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print JSON instead of the table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    maps: PathBuf,
    #[arg(long, default_value_t = 10_000.0)]
    rho: f64,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// Span of the relative depth interval, mm.
    #[arg(long, default_value_t = 2_000.0)]
    depth_range: f64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_size(s: &str) -> Result<(f64, f64), String> {
    parse_two(s, 'x')
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    parse_two(s, ',')
}

fn parse_two(s: &str, sep: char) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(sep)
        .ok_or_else(|| format!("expected two numbers separated by '{sep}'"))?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    Ok((a, b))
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Core(e) => match e.root() {
                Error::InvalidInput(_) => 2,
                Error::Validation(_) | Error::InvalidExtrinsics(_) | Error::Json(_) => 3,
                Error::DegenerateGeometry(_) => 4,
                Error::NumericalFailure { .. } => 5,
                Error::Io(_) | Error::Camera { .. } => 1,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(msg) => write!(f, "usage error: {msg}"),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Fuse(a) => fuse(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Decode(a) => decode(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}

fn synth(a: SynthArgs) -> CmdResult {
    let cfg = SceneConfig {
        n_cameras: a.cameras,
        n_frames: a.frames,
        n_joints: a.joints,
        noise: NoiseModel {
            sigma_uv_px: a.noise_uv_px,
            sigma_z_mm: a.noise_z_mm,
        },
        occlusion_rate: a.occlusion,
        image_size: a.image_size,
        seed: a.seed,
        ..SceneConfig::default()
    };
    let (scene, obs) = generate_scene(&cfg)?;
    let skeleton = Skeleton::anonymous(cfg.n_joints);
    let size = ImageSize {
        width: cfg.image_size.0,
        height: cfg.image_size.1,
    };
    let poses = PosesFile::from_tracks(skeleton.clone(), &obs.tracks, Some(size));
    let gt: BTreeMap<u64, _> = scene
        .poses
        .iter()
        .enumerate()
        .map(|(i, p)| (i as u64, p.clone()))
        .collect();
    write_json(&a.out_poses, &poses)?;
    write_json(
        &a.out_gt_calib,
        &CalibFile::from_calibration(&scene.cameras),
    )?;
    write_json(
        &a.out_gt_poses,
        &AbsolutePosesFile::new(skeleton, camera_id(0), &gt),
    )?;
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> CmdResult {
    let poses = read_poses(&a.poses)?;
    if poses.cameras.len() < 2 {
        return Err(Failure::Usage(format!(
            "calibration needs at least 2 cameras, the poses file lists {}",
            poses.cameras.len()
        )));
    }
    let reference = match a.ref_camera {
        Some(r) if poses.cameras.contains(&r) => r,
        Some(r) => {
            return Err(Failure::Usage(format!(
                "reference camera {r} not in the poses file"
            )))
        }
        None => poses.cameras[0].clone(),
    };
    let initial = match &a.init_calib {
        Some(path) => read_calib(path)?
            .to_calibration()?
            .cameras()
            .iter()
            .map(|(id, c)| (id.clone(), c.intrinsics))
            .collect(),
        None => BTreeMap::new(),
    };
    let cfg = OptimizerConfig {
        max_iter: a.max_iter,
        rel_tol: a.rel_tol,
        conf_threshold: a.conf_threshold,
        init_focal_px: a.init_focal,
        init_center_px: a.init_center,
        image_size: a
            .image_size
            .or(poses.image_size.map(|s| (s.width, s.height))),
        freeze_intrinsics: a.freeze_intrinsics,
        weighted: a.weighted,
    };
    let rig = calibrate_rig(&poses.tracks()?, &reference, &initial, &cfg)?;
    for (camera, pair) in &rig.pairs {
        eprintln!(
            "{reference}<-{camera}: {} correspondences, {} iterations, converged {}, rms {:.6} mm, {} rejected updates",
            pair.correspondences,
            pair.iterations,
            pair.converged,
            pair.rms_residual(),
            pair.rejected_updates
        );
    }
    write_json(&a.out, &CalibFile::from_calibration(&rig.calibration))?;
    if let Some(path) = &a.trace {
        write_atomic(path, trace_csv(&rig.pairs).as_bytes())?;
    }
    Ok(())
}

fn fuse(a: FuseArgs) -> CmdResult {
    if !(0.0..=1.0).contains(&a.conf_threshold) {
        return Err(Failure::Usage("--conf-threshold must lie in [0, 1]".into()));
    }
    let poses = read_poses(&a.poses)?;
    let calib = read_calib(&a.calib)?.to_calibration()?;
    if let Some(missing) = poses.cameras.iter().find(|c| calib.get(c).is_none()) {
        return Err(
            Error::Validation(format!("camera {missing} is missing from the calibration")).into(),
        );
    }
    let fused = fuse_tracks(&poses.tracks()?, &calib, a.conf_threshold)?;
    let out = AbsolutePosesFile::new(poses.skeleton, calib.reference().to_string(), &fused);
    write_json(&a.out, &out)?;
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> CmdResult {
    let pred = read_absolute_poses(&a.pred)?;
    let gt = read_absolute_poses(&a.gt)?;
    let pred = pred.poses()?;
    let gt_poses = gt.poses()?;

    let pred_ids: BTreeSet<u64> = pred.keys().copied().collect();
    let gt_ids: BTreeSet<u64> = gt_poses.keys().copied().collect();
    if pred_ids != gt_ids {
        let list = |s: BTreeSet<&u64>| {
            s.into_iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        };
        return Err(Error::Validation(format!(
            "frame ids differ; missing from prediction: [{}]; missing from ground truth: [{}]",
            list(gt_ids.difference(&pred_ids).collect()),
            list(pred_ids.difference(&gt_ids).collect())
        ))
        .into());
    }
    if gt_ids.is_empty() {
        return Err(Error::Validation("no frames to evaluate".into()).into());
    }

    let cfg = EvalConfig {
        root_index: gt.skeleton.root_index,
        pck_threshold_mm: a.pck_threshold,
        ..EvalConfig::default()
    };
    let pred: Vec<_> = pred.into_values().collect();
    let gt: Vec<_> = gt_poses.into_values().collect();
    let report = evaluate(&pred, &gt, &a.metrics, &cfg)?;
    if a.json {
        let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Core(e.into()))?;
        println!("{text}");
    } else {
        print!("{}", report.to_table());
    }
    if let Some(path) = &a.out {
        write_json(path, &report)?;
    }
    Ok(())
}

fn decode(a: DecodeArgs) -> CmdResult {
    let cfg = DecodeConfig {
        rho: a.rho,
        beta: a.beta,
        depth_range_mm: a.depth_range,
    };
    let maps: MapsFile = read_json(&a.maps)?;
    let poses = maps.decode(&cfg)?;
    write_json(&a.out, &poses)?;
    Ok(())
}
