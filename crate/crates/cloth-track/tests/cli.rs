//! End-to-end tests of the `clothtrack` binary: the full
//! gen → calibrate → track → eval → bench pipeline on a small scenario,
//! plus the exit-code and error-record contract.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_clothtrack"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary should spawn")
}

fn assert_success(out: &Output, context: &str) {
    assert!(
        out.status.success(),
        "{context} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
}

/// Small-scenario overrides shared by the pipeline tests.
const SMALL: &[&str] = &[
    "--set",
    "scenario.cloth_x=6",
    "--set",
    "scenario.cloth_y=6",
    "--set",
    "scenario.substeps_per_action=8",
    "--set",
    "scenario.settle_substeps=2",
    "--set",
    "scenario.lift_height=0.03",
    "--set",
    "grid.stiffness=0.4 1.2",
    "--set",
    "grid.dynamic_friction=0.43",
    "--set",
    "grid.particle_friction=0.65",
];

fn gen_small(dir: &Path) {
    let out = bin()
        .args(["gen", "--out"])
        .arg(dir)
        .args(["--seed", "5", "--trajectories", "2", "--segments", "2"])
        .args(SMALL)
        .output()
        .expect("binary should spawn");
    assert_success(&out, "gen");
}

#[test]
fn gen_track_eval_round_trip() {
    let tmp = tempdir().unwrap();
    let trajs = tmp.path().join("trajs");
    let ds = tmp.path().join("ds");
    gen_small(&trajs);
    assert!(trajs.join("scenario.json").exists());
    assert!(trajs.join("trajectory_001.json").exists());

    let out = bin()
        .args(["track", "--trajectories"])
        .arg(&trajs)
        .arg("--out")
        .arg(&ds)
        .args(SMALL)
        .args(["--tto-iters", "10"])
        .output()
        .unwrap();
    assert_success(&out, "track");
    assert!(ds.join("manifest.json").exists());

    // One diagnostics line per record: 2 trajectories x (1 initial + 2
    // segments).
    let diag = std::fs::read_to_string(ds.join("diagnostics.jsonl")).unwrap();
    assert_eq!(diag.lines().count(), 6);
    for line in diag.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("trajectory").is_some());
        assert!(v.get("chamfer_final").is_some());
    }

    let out = bin()
        .args(["eval", "--dataset"])
        .arg(&ds)
        .arg("--trajectories")
        .arg(&trajs)
        .output()
        .unwrap();
    assert_success(&out, "eval");
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7, "header + 6 records");
    assert!(lines[0].starts_with("method,"));
    assert!(lines[0].contains("chamfer_final_m2"), "squared is the default");
    assert!(lines[1].starts_with("ours,"));

    // The unsquared convention changes the unit columns.
    let out = bin()
        .args(["eval", "--dataset"])
        .arg(&ds)
        .arg("--trajectories")
        .arg(&trajs)
        .args(["--chamfer", "unsquared"])
        .output()
        .unwrap();
    assert_success(&out, "eval unsquared");
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.lines().next().unwrap().contains("chamfer_final_m,"));
}

#[test]
fn ablated_datasets_are_labeled_in_eval_rows() {
    let tmp = tempdir().unwrap();
    let trajs = tmp.path().join("trajs");
    let ds = tmp.path().join("ds");
    gen_small(&trajs);

    let out = bin()
        .args(["track", "--trajectories"])
        .arg(&trajs)
        .arg("--out")
        .arg(&ds)
        .args(SMALL)
        .args(["--tto-iters", "10", "--ablate", "no-act-cond"])
        .output()
        .unwrap();
    assert_success(&out, "track --ablate no-act-cond");

    let out = bin()
        .args(["eval", "--dataset"])
        .arg(&ds)
        .arg("--trajectories")
        .arg(&trajs)
        .output()
        .unwrap();
    assert_success(&out, "eval of ablated dataset");
    let csv = String::from_utf8(out.stdout).unwrap();
    for row in csv.lines().skip(1) {
        assert!(row.starts_with("no_act_cond,"), "row: {row}");
    }
}

#[test]
fn calibrate_reports_one_winner_per_trajectory() {
    let tmp = tempdir().unwrap();
    let trajs = tmp.path().join("trajs");
    gen_small(&trajs);

    let out = bin()
        .args(["calibrate", "--trajectories"])
        .arg(&trajs)
        .args(SMALL)
        .output()
        .unwrap();
    assert_success(&out, "calibrate");
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = report.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert_eq!(row["all_exploded"], serde_json::Value::Bool(false));
        assert!(row["objective"].as_f64().unwrap().is_finite());
        let s = row["params"]["stiffness"].as_f64().unwrap();
        assert!(s == 0.4 || s == 1.2);
    }
}

#[test]
fn bench_matrix_is_reproducible_and_labeled() {
    let tmp = tempdir().unwrap();
    let args: Vec<&str> = ["bench", "--seeds", "2", "--tto-iters", "8"]
        .iter()
        .chain(SMALL.iter())
        .chain(
            [
                "--set",
                "scenario.num_trajectories=1",
                "--set",
                "scenario.segments_per_trajectory=1",
            ]
            .iter(),
        )
        .copied()
        .collect();

    let first = run(&args);
    assert_success(&first, "bench");
    let second = run(&args);
    assert_success(&second, "bench rerun");
    assert_eq!(first.stdout, second.stdout, "bench CSV must be byte-reproducible");

    let csv = String::from_utf8(first.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 11, "header + 5 methods x 2 seeds");
    for method in ["ours", "no_pseudo_action", "no_dyn_init", "no_act_cond", "no_tto2"] {
        let n = lines[1..]
            .iter()
            .filter(|l| l.starts_with(&format!("{method},")))
            .count();
        assert_eq!(n, 2, "two seeds for {method}");
    }

    // --out writes the same bytes to a file instead.
    let out_file = tmp.path().join("bench.csv");
    let mut file_args = args.clone();
    file_args.push("--out");
    let out_str = out_file.to_str().unwrap();
    file_args.push(out_str);
    let third = run(&file_args);
    assert_success(&third, "bench --out");
    assert_eq!(std::fs::read_to_string(&out_file).unwrap(), csv);
}

#[test]
fn dump_frames_writes_obj_sequences() {
    let tmp = tempdir().unwrap();
    let trajs = tmp.path().join("trajs");
    let ds = tmp.path().join("ds");
    let frames = tmp.path().join("frames");
    gen_small(&trajs);

    let out = bin()
        .args(["track", "--trajectories"])
        .arg(&trajs)
        .arg("--out")
        .arg(&ds)
        .args(SMALL)
        .args(["--tto-iters", "8", "--dump-frames"])
        .arg(&frames)
        .output()
        .unwrap();
    assert_success(&out, "track --dump-frames");

    let seq = frames.join("traj000_seg00");
    assert!(seq.join("step000.obj").exists());
    assert!(seq.join("step007.obj").exists(), "one frame per substep");
    assert!(seq.join("final.obj").exists());
    let text = std::fs::read_to_string(seq.join("step000.obj")).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 36);
    assert!(text.lines().any(|l| l.starts_with("f ")));
}

#[test]
fn config_file_layering_matches_set_flags() {
    let tmp = tempdir().unwrap();
    let trajs_a = tmp.path().join("a");
    let trajs_b = tmp.path().join("b");

    let config = tmp.path().join("small.cfg");
    std::fs::write(
        &config,
        "# small scenario\n\
         scenario.cloth_x = 6\n\
         scenario.cloth_y = 6\n\
         scenario.substeps_per_action = 8\n\
         scenario.settle_substeps = 2\n\
         scenario.lift_height = 0.03\n\
         scenario.rng_seed = 5\n\
         scenario.num_trajectories = 2\n\
         scenario.segments_per_trajectory = 2\n",
    )
    .unwrap();

    let out = bin()
        .args(["gen", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&trajs_a)
        .output()
        .unwrap();
    assert_success(&out, "gen --config");

    gen_small(&trajs_b);

    // Same settings through either layer produce identical trajectory
    // files (grid.* keys don't affect generation).
    for name in ["scenario.json", "trajectory_000.json", "trajectory_001.json"] {
        let a = std::fs::read_to_string(trajs_a.join(name)).unwrap();
        let b = std::fs::read_to_string(trajs_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between --config and --set runs");
    }

    // --set overrides the file.
    let trajs_c = tmp.path().join("c");
    let out = bin()
        .args(["gen", "--config"])
        .arg(&config)
        .args(["--set", "scenario.num_trajectories=1", "--out"])
        .arg(&trajs_c)
        .output()
        .unwrap();
    assert_success(&out, "gen --config + --set");
    assert!(trajs_c.join("trajectory_000.json").exists());
    assert!(!trajs_c.join("trajectory_001.json").exists());
}

#[test]
fn failures_exit_with_distinct_codes_and_json_records() {
    // Validation problem: exit 3.
    let out = run(&["track", "--trajectories", "/nonexistent", "--out", "/tmp/x", "--set", "tracker.gamma=-1"]);
    assert_eq!(out.status.code(), Some(3));
    let record: serde_json::Value =
        serde_json::from_slice(&out.stderr).expect("stderr should be one JSON record");
    assert_eq!(record["error"]["kind"], "invalid_param");
    assert_eq!(record["error"]["exit_code"], 3);
    assert!(record["error"]["message"].as_str().unwrap().contains("gamma"));

    // Missing input: exit 4.
    let tmp = tempdir().unwrap();
    let out = bin()
        .args(["eval", "--dataset", "/nonexistent/ds", "--trajectories"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"]["kind"], "io");

    // Unknown config key: exit 3 with the key named.
    let out = run(&["gen", "--out", "/tmp/x", "--set", "scenario.bogus=1"]);
    assert_eq!(out.status.code(), Some(3));
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(record["error"]["message"].as_str().unwrap().contains("scenario.bogus"));

    // Clap usage problems keep their conventional exit code 2.
    let out = run(&["gen"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}
