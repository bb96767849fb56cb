use std::path::Path;
use std::process::{Command, Output};

fn hookplan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hookplan"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = hookplan(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_plan_smooth_simulate() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--archetype", "open-box", "--out", "shoe.ply"]);
    assert!(d.join("shoe.goal.json").is_file());
    ok(d, &["--seed", "3", "plan", "--cloud", "shoe.ply", "--goal", "shoe.goal.json", "--out", "raw.json"]);
    let raw = json(&d.join("raw.json"));
    assert_eq!(raw["frame"], "shoe");
    ok(
        d,
        &["--seed", "3", "smooth", "--cloud", "shoe.ply", "--goal", "shoe.goal.json", "--path", "raw.json", "--out", "traj.json"],
    );
    let traj = json(&d.join("traj.json"));
    assert_eq!(traj["n"], 9);
    assert_eq!(traj["waypoints"].as_array().unwrap().len(), 9);
    let verdict = ok(d, &["simulate", "--cloud", "shoe.ply", "--goal", "shoe.goal.json", "--traj", "traj.json"]);
    assert!(verdict.contains("\"success\":true"), "{verdict}");

    // far-away goal: the goal-miss verdict exits 1
    let out = hookplan(d, &["simulate", "--cloud", "shoe.ply", "--goal", "0.5,0.5,0.5", "--traj", "traj.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("goal-miss"));
}

#[test]
fn render_then_augment() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("cfg.toml"), "[views]\nviews = 2\n").unwrap();
    ok(d, &["synth", "--archetype", "low-flat", "--out", "shoe.ply"]);
    ok(d, &["--config", "cfg.toml", "--out-dir", "views", "render", "--cloud", "shoe.ply"]);
    let views = json(&d.join("views/views.json"));
    assert_eq!(views.as_array().unwrap().len(), 2);
    std::fs::write(d.join("pose.json"), views[0]["shoe_pose"].to_string()).unwrap();
    // a one-waypoint camera-frame trajectory at the shoe origin
    let p = views[0]["shoe_pose"].as_array().unwrap();
    let traj = serde_json::json!({
        "frame": "camera",
        "n": 1,
        "waypoints": [{"t": [p[3], p[7], p[11]], "r": [p[0], p[1], p[2], p[4], p[5], p[6], p[8], p[9], p[10]]}]
    });
    std::fs::write(d.join("traj.json"), traj.to_string()).unwrap();
    ok(
        d,
        &[
            "--out-dir", "aug", "augment", "--gray", "views/view000_gray.png", "--depth", "views/view000_depth.png",
            "--traj", "traj.json", "--shoe-pose", "pose.json", "--theta", "0.05", "--phi", "-0.05", "--delta-z", "0.1",
        ],
    );
    for f in ["gray.png", "depth.png", "trajectory.json", "shoe_pose.json", "params.json"] {
        assert!(d.join("aug").join(f).is_file(), "{f}");
    }
    let t = json(&d.join("aug/trajectory.json"));
    let z0 = p[11].as_f64().unwrap();
    let z1 = t["waypoints"][0]["t"][2].as_f64().unwrap();
    assert!(z1 < z0, "camera moved toward the shoe");
}

#[test]
fn dataset_gen_and_validate() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("cfg.toml"), "[views]\nviews = 2\n").unwrap();
    let args = [
        "--config", "cfg.toml", "--seed", "5", "--out-dir", "ds", "dataset", "gen", "--archetypes", "open-box,low-flat",
        "--augmentations", "2",
    ];
    ok(d, &args);
    let manifest = std::fs::read_to_string(d.join("ds/manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 2 * 2 * 3);
    let report = ok(d, &["--out-dir", "ds", "dataset", "validate"]);
    assert!(report.contains("\"failed\": 0"), "{report}");

    // resuming a finished run writes nothing new
    ok(d, &args);
    assert_eq!(std::fs::read_to_string(d.join("ds/manifest.jsonl")).unwrap(), manifest);

    let first: serde_json::Value = serde_json::from_str(manifest.lines().nth(1).unwrap()).unwrap();
    std::fs::remove_file(d.join("ds").join(first["gray"].as_str().unwrap())).unwrap();
    let out = hookplan(d, &["--out-dir", "ds", "dataset", "validate"]);
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["failed"], 1);
    assert_eq!(report["failures"][0]["id"], first["id"]);
}

#[test]
fn eval_matrix_and_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let stdout = ok(d, &["eval-matrix", "--archetypes", "open-box,narrow-throat", "--seeds", "2", "--out", "m.json"]);
    let m = json(&d.join("m.json"));
    assert_eq!(m["success"][0][0], 1.0);
    assert_eq!(m["success"][1][1], 1.0);
    assert!(stdout.starts_with("[["));

    ok(d, &["synth", "--archetype", "open-box", "--out", "shoe.ply"]);
    ok(d, &["plan", "--cloud", "shoe.ply", "--goal", "shoe.goal.json", "--out", "raw.json"]);
    ok(d, &["smooth", "--cloud", "shoe.ply", "--goal", "shoe.goal.json", "--path", "raw.json", "--out", "traj.json"]);
    let calib = serde_json::json!({
        "camera_to_robot": [1, 0, 0, 0.5, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1]
    });
    std::fs::write(d.join("calib.json"), calib.to_string()).unwrap();
    ok(d, &["baseline", "--cloud", "shoe.ply", "--traj", "traj.json", "--calib", "calib.json", "--out", "robot.json"]);
    let robot = json(&d.join("robot.json"));
    assert_eq!(robot["frame"], "robot");
    assert_eq!(robot["n"], 9);
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(hookplan(d, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(hookplan(d, &["synth", "--archetype", "boot", "--out", "x.ply"]).status.code(), Some(2));
    std::fs::write(d.join("bad.toml"), "[planner]\ngoal_bias = 3.0\n").unwrap();
    let out = hookplan(d, &["--config", "bad.toml", "eval-matrix", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(hookplan(d, &["eval-matrix", "--archetypes", "boot", "--out", "m.json"]).status.code(), Some(2));
    // missing input file is a runtime failure, not a usage error
    assert_eq!(hookplan(d, &["render", "--cloud", "nope.ply"]).status.code(), Some(1));
}
