use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvpose"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Scene {
    dir: TempDir,
}

impl Scene {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn new(extra: &[&str]) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let scene = Scene { dir };
        let (p, c, g) = (
            scene.path("poses.json"),
            scene.path("gt_calib.json"),
            scene.path("gt_poses.json"),
        );
        let mut args = vec![
            "synth",
            "--out-poses",
            s(&p),
            "--out-gt-calib",
            s(&c),
            "--out-gt-poses",
            s(&g),
        ];
        args.extend_from_slice(extra);
        ok(&args);
        scene
    }
}

fn max_abs_diff(a: &Value, b: &Value) -> f64 {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => (x.as_f64().unwrap() - y.as_f64().unwrap()).abs(),
        (Value::Array(x), Value::Array(y)) => {
            assert_eq!(x.len(), y.len());
            x.iter()
                .zip(y)
                .map(|(p, q)| max_abs_diff(p, q))
                .fold(0.0, f64::max)
        }
        (Value::Object(x), Value::Object(y)) => {
            assert_eq!(x.len(), y.len());
            x.iter()
                .map(|(k, v)| max_abs_diff(v, &y[k]))
                .fold(0.0, f64::max)
        }
        _ => {
            assert_eq!(a, b);
            0.0
        }
    }
}

#[test]
fn synth_is_bit_identical_across_runs() {
    let args = [
        "--cameras",
        "4",
        "--frames",
        "100",
        "--joints",
        "17",
        "--seed",
        "7",
    ];
    let a = Scene::new(&args);
    let b = Scene::new(&args);
    for name in ["poses.json", "gt_calib.json", "gt_poses.json"] {
        assert_eq!(
            std::fs::read(a.path(name)).unwrap(),
            std::fs::read(b.path(name)).unwrap(),
            "{name}"
        );
    }
    let poses = read(&a.path("poses.json"));
    assert_eq!(poses["cameras"].as_array().unwrap().len(), 4);
    assert_eq!(poses["frames"].as_array().unwrap().len(), 100);
    assert_eq!(poses["skeleton"]["n_joints"], 17);
}

#[test]
fn synth_rejects_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.json");
    for bad in [
        ["--joints", "0"],
        ["--occlusion", "1.5"],
        ["--noise-z-mm", "-1"],
    ] {
        let mut args = vec![
            "synth",
            "--out-poses",
            s(&p),
            "--out-gt-calib",
            s(&p),
            "--out-gt-poses",
            s(&p),
        ];
        args.extend_from_slice(&bad);
        assert_eq!(code(&run(&args)), 2, "{bad:?}");
    }
    assert_eq!(code(&run(&["synth", "--cameras", "2"])), 2);
}

#[test]
fn single_camera_synth_feeds_monocular_evaluation() {
    let sc = Scene::new(&["--cameras", "1", "--frames", "5", "--seed", "3"]);
    let fused = sc.path("fused.json");
    ok(&[
        "fuse",
        "--poses",
        s(&sc.path("poses.json")),
        "--calib",
        s(&sc.path("gt_calib.json")),
        "--out",
        s(&fused),
    ]);
    let out = ok(&[
        "evaluate",
        "--pred",
        s(&fused),
        "--gt",
        s(&sc.path("gt_poses.json")),
        "--json",
    ]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["mpjpe_mm"].as_f64().unwrap() < 1e-6);

    let calib = sc.path("calib.json");
    let out = run(&[
        "calibrate",
        "--poses",
        s(&sc.path("poses.json")),
        "--out",
        s(&calib),
    ]);
    assert_eq!(code(&out), 2);
    assert!(!calib.exists());
}

#[test]
fn calibrate_with_frozen_truth_recovers_extrinsics() {
    let sc = Scene::new(&["--frames", "30", "--seed", "11"]);
    let calib = sc.path("calib.json");
    let trace = sc.path("trace.csv");
    ok(&[
        "calibrate",
        "--poses",
        s(&sc.path("poses.json")),
        "--init-calib",
        s(&sc.path("gt_calib.json")),
        "--freeze-intrinsics",
        "--out",
        s(&calib),
        "--trace",
        s(&trace),
    ]);
    let est = read(&calib);
    let gt = read(&sc.path("gt_calib.json"));
    assert_eq!(est["reference_camera"], "cam0");
    for (e, g) in est["cameras"]
        .as_array()
        .unwrap()
        .iter()
        .zip(gt["cameras"].as_array().unwrap())
    {
        assert_eq!(e["camera_id"], g["camera_id"]);
        assert!(max_abs_diff(&e["rotation"], &g["rotation"]) < 1e-9);
        assert!(max_abs_diff(&e["translation"], &g["translation"]) < 1e-6);
    }

    let csv = std::fs::read_to_string(&trace).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iteration,substep,objective,camera"));
    let mut last: std::collections::BTreeMap<String, f64> = Default::default();
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let obj: f64 = cols[2].parse().unwrap();
        if let Some(prev) = last.insert(cols[3].to_string(), obj) {
            assert!(obj <= prev * (1.0 + 1e-9) + 1e-12, "{line}");
        }
    }
    assert_eq!(last.len(), 3);
}

#[test]
fn calibrate_trace_is_non_increasing_with_free_intrinsics() {
    let sc = Scene::new(&[
        "--frames",
        "30",
        "--seed",
        "5",
        "--noise-uv-px",
        "2",
        "--noise-z-mm",
        "20",
    ]);
    let trace = sc.path("trace.csv");
    ok(&[
        "calibrate",
        "--poses",
        s(&sc.path("poses.json")),
        "--max-iter",
        "40",
        "--out",
        s(&sc.path("calib.json")),
        "--trace",
        s(&trace),
    ]);
    let csv = std::fs::read_to_string(&trace).unwrap();
    let mut last: std::collections::BTreeMap<String, f64> = Default::default();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let obj: f64 = cols[2].parse().unwrap();
        if let Some(prev) = last.insert(cols[3].to_string(), obj) {
            assert!(obj <= prev * (1.0 + 1e-9), "{line}");
        }
    }
}

#[test]
fn zero_iterations_returns_initialization() {
    let sc = Scene::new(&["--frames", "10", "--seed", "2"]);
    let calib = sc.path("calib.json");
    ok(&[
        "calibrate",
        "--poses",
        s(&sc.path("poses.json")),
        "--max-iter",
        "0",
        "--out",
        s(&calib),
    ]);
    let est = read(&calib);
    for cam in est["cameras"].as_array().unwrap() {
        let r: Vec<f64> = cam["rotation"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        assert_eq!(r, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(cam["fx"], 1000.0);
        assert_eq!(cam["cx"], 500.0);
    }
}

#[test]
fn fuse_with_truth_matches_ground_truth() {
    let sc = Scene::new(&["--frames", "20", "--seed", "9"]);
    let fused = sc.path("fused.json");
    ok(&[
        "fuse",
        "--poses",
        s(&sc.path("poses.json")),
        "--calib",
        s(&sc.path("gt_calib.json")),
        "--out",
        s(&fused),
    ]);
    let fused = read(&fused);
    let gt = read(&sc.path("gt_poses.json"));
    assert_eq!(fused["reference_camera"], gt["reference_camera"]);
    assert!(max_abs_diff(&fused["frames"], &gt["frames"]) < 1e-6);
}

#[test]
fn zero_confidence_view_does_not_change_fusion() {
    let sc = Scene::new(&[
        "--frames",
        "5",
        "--seed",
        "4",
        "--noise-uv-px",
        "3",
        "--noise-z-mm",
        "30",
    ]);
    let poses_path = sc.path("poses.json");
    let mut poses = read(&poses_path);

    let mut zeroed = poses.clone();
    for frame in zeroed["frames"].as_array_mut().unwrap() {
        for obs in frame["observations"].as_array_mut().unwrap() {
            if obs["camera_id"] == "cam3" {
                for j in obs["joints"].as_array_mut().unwrap() {
                    j["conf"] = 0.0.into();
                }
            }
        }
    }
    for frame in poses["frames"].as_array_mut().unwrap() {
        frame["observations"]
            .as_array_mut()
            .unwrap()
            .retain(|o| o["camera_id"] != "cam3");
    }
    let (with, without) = (sc.path("with.json"), sc.path("without.json"));
    std::fs::write(&with, zeroed.to_string()).unwrap();
    std::fs::write(&without, poses.to_string()).unwrap();
    let calib = sc.path("gt_calib.json");
    let (fa, fb) = (sc.path("fa.json"), sc.path("fb.json"));
    // Threshold zero keeps every view in the weighted mean.
    ok(&[
        "fuse",
        "--poses",
        s(&with),
        "--calib",
        s(&calib),
        "--conf-threshold",
        "0",
        "--out",
        s(&fa),
    ]);
    ok(&[
        "fuse",
        "--poses",
        s(&without),
        "--calib",
        s(&calib),
        "--conf-threshold",
        "0",
        "--out",
        s(&fb),
    ]);
    assert!(max_abs_diff(&read(&fa), &read(&fb)) < 1e-9);
}

#[test]
fn fuse_names_missing_camera() {
    let sc = Scene::new(&["--frames", "3", "--seed", "1"]);
    let mut calib = read(&sc.path("gt_calib.json"));
    calib["cameras"]
        .as_array_mut()
        .unwrap()
        .retain(|c| c["camera_id"] != "cam2");
    let partial = sc.path("partial.json");
    std::fs::write(&partial, calib.to_string()).unwrap();
    let out = run(&[
        "fuse",
        "--poses",
        s(&sc.path("poses.json")),
        "--calib",
        s(&partial),
        "--out",
        s(&sc.path("f.json")),
    ]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cam2"));
}

fn abs_file(frames: &[(u64, Vec<[f64; 3]>)]) -> Value {
    serde_json::json!({
        "skeleton": {"n_joints": frames[0].1.len(), "root_index": 0, "joint_names": []},
        "reference_camera": "cam0",
        "frames": frames.iter().map(|(id, joints)| serde_json::json!({
            "frame_id": id,
            "joints": joints.iter().map(|p| serde_json::json!({"x": p[0], "y": p[1], "z": p[2]})).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    })
}

#[test]
fn evaluate_identical_files() {
    let sc = Scene::new(&["--frames", "4", "--seed", "6"]);
    let gt = sc.path("gt_poses.json");
    let report_path = sc.path("report.json");
    let out = ok(&[
        "evaluate",
        "--pred",
        s(&gt),
        "--gt",
        s(&gt),
        "--out",
        s(&report_path),
    ]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("mpjpe_mm"), "{table}");
    let report = read(&report_path);
    assert_eq!(report["mpjpe_mm"], 0.0);
    assert_eq!(report["mrpe_mm"], 0.0);
    assert_eq!(report["pck"], 1.0);
    assert_eq!(report["auc"], 1.0);
}

#[test]
fn evaluate_constructed_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let gt_pts = vec![
        [0.0, 0.0, 4000.0],
        [100.0, 0.0, 4000.0],
        [0.0, 200.0, 4000.0],
    ];
    // Root shifted by (30, 40, 0): MRPE 50. Joint 1 off by 120 and joint 2 by
    // 200 relative to the root: MPJPE (0 + 120 + 200) / 3. PCK@150 = 2/3.
    let pred_pts = vec![
        [30.0, 40.0, 4000.0],
        [250.0, 40.0, 4000.0],
        [30.0, 440.0, 4000.0],
    ];
    let (p, g) = (dir.path().join("p.json"), dir.path().join("g.json"));
    std::fs::write(&p, abs_file(&[(0, pred_pts)]).to_string()).unwrap();
    std::fs::write(&g, abs_file(&[(0, gt_pts)]).to_string()).unwrap();
    let out = ok(&[
        "evaluate",
        "--pred",
        s(&p),
        "--gt",
        s(&g),
        "--metrics",
        "mpjpe,mrpe,pck",
        "--json",
    ]);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((r["mpjpe_mm"].as_f64().unwrap() - 320.0 / 3.0).abs() < 1e-9);
    assert!((r["mrpe_mm"].as_f64().unwrap() - 50.0).abs() < 1e-9);
    assert!((r["pck"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert!(r.get("auc").is_none());

    let out = run(&[
        "evaluate",
        "--pred",
        s(&p),
        "--gt",
        s(&g),
        "--metrics",
        "mpjpe,bogus",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn evaluate_lists_missing_frames() {
    let dir = tempfile::tempdir().unwrap();
    let pose = vec![[0.0, 0.0, 1.0]];
    let (p, g) = (dir.path().join("p.json"), dir.path().join("g.json"));
    std::fs::write(
        &p,
        abs_file(&[(0, pose.clone()), (2, pose.clone())]).to_string(),
    )
    .unwrap();
    std::fs::write(
        &g,
        abs_file(&[(0, pose.clone()), (1, pose.clone()), (5, pose)]).to_string(),
    )
    .unwrap();
    let out = run(&["evaluate", "--pred", s(&p), "--gt", s(&g)]);
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("[1, 5]") && err.contains("[2]"), "{err}");
}

#[test]
fn decode_worked_example_and_delta_maps() {
    let dir = tempfile::tempdir().unwrap();
    let maps = dir.path().join("maps.json");
    std::fs::write(
        &maps,
        r#"{"frames":[{"frame_id":0,"observations":[{"camera_id":"c0","alpha_z":0.0,"joints":[
            {"heatmap":[[0.25,0.25],[0.25,0.25]],"depth":[[0.2,0.8],[0.4,0.6]]},
            {"heatmap":[[0,0,0],[0,0,0],[0,1,0]],"depth":[[0,0,0],[0,0,0],[0,0.75,0]],"conf":0.9}
        ]}]}]}"#,
    )
    .unwrap();
    let out_path = dir.path().join("poses.json");
    ok(&["decode", "--maps", s(&maps), "--out", s(&out_path)]);
    let poses = read(&out_path);
    let joints = &poses["frames"][0]["observations"][0]["joints"];
    assert!((joints[0]["z"].as_f64().unwrap() - 5000.0).abs() < 1e-9);
    assert_eq!(joints[0]["u"], 0.5);
    assert_eq!(joints[1]["u"], 1.0);
    assert_eq!(joints[1]["v"], 2.0);
    assert!((joints[1]["z"].as_f64().unwrap() - 5500.0).abs() < 1e-9);
    assert_eq!(poses["cameras"][0], "c0");
}

#[test]
fn decode_rejects_unnormalized_heatmap_with_joint_index() {
    let dir = tempfile::tempdir().unwrap();
    let maps = dir.path().join("maps.json");
    std::fs::write(
        &maps,
        r#"{"frames":[{"frame_id":0,"observations":[{"camera_id":"c0","alpha_z":0.0,"joints":[
            {"heatmap":[[1.0]],"depth":[[0.5]]},
            {"heatmap":[[1.0]],"depth":[[0.5]]},
            {"heatmap":[[0.6,0.6]],"depth":[[0.5,0.5]]}
        ]}]}]}"#,
    )
    .unwrap();
    let out = run(&[
        "decode",
        "--maps",
        s(&maps),
        "--out",
        s(&dir.path().join("o.json")),
    ]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("joint 2"));
}
