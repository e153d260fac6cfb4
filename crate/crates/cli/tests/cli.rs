//! Binary-level checks of the run/export-dict subcommands and their
//! failure paths.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rnpe"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rnpe_cli_{tag}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn five_seeds_produce_five_csvs_plus_aggregate() {
    let dir = temp_dir("five_seeds");
    let cfg = write_config(
        &dir,
        "exp.cfg",
        "method = lspe\nenv = chain-stoch\nmax_transitions = 300\nepsilon = 0.2\n\
         seeds = 1,2,3,4,5\nrecord_wallclock = off\n",
    );
    let out = dir.join("out");
    let status = bin().arg("run").arg(&cfg).arg("--output").arg(&out).status().unwrap();
    assert!(status.success());
    for seed in 1..=5 {
        assert!(out.join(format!("seed_{seed}.csv")).is_file());
    }
    assert!(out.join("aggregate.csv").is_file());
}

#[test]
fn zero_transitions_exits_cleanly_with_headers_only() {
    let dir = temp_dir("zero");
    let cfg = write_config(&dir, "exp.cfg", "max_transitions = 0\nseeds = 1\n");
    let out = dir.join("out");
    let status = bin().arg("run").arg(&cfg).arg("--output").arg(&out).status().unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("seed_1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("transitions_seen,"));
}

#[test]
fn rerun_with_the_same_config_is_byte_identical() {
    let dir = temp_dir("rerun");
    let cfg = write_config(
        &dir,
        "exp.cfg",
        "method = lspe\nenv = chain-stoch\nmax_transitions = 1000\nepsilon = 0.2\n\
         seeds = 3,4\nrecord_wallclock = off\n",
    );
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    for out in [&out_a, &out_b] {
        let status = bin().arg("run").arg(&cfg).arg("--output").arg(out).status().unwrap();
        assert!(status.success());
    }
    for name in ["seed_3.csv", "seed_4.csv", "aggregate.csv"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
}

#[test]
fn invalid_config_fails_with_a_line_anchored_message() {
    let dir = temp_dir("invalid");
    let cfg = write_config(&dir, "exp.cfg", "gamma = 0.9\nbogus line\n");
    let output = bin().arg("run").arg(&cfg).output().unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 2"), "stderr: {stderr}");
}

#[test]
fn brm_on_a_stochastic_env_is_a_validation_error() {
    let dir = temp_dir("brm");
    let cfg = write_config(&dir, "exp.cfg", "method = brm\nenv = chain-stoch\n");
    let output = bin().arg("run").arg(&cfg).output().unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("deterministic"), "stderr: {stderr}");
}

#[test]
fn snapshots_round_trip_through_export_dict() {
    let dir = temp_dir("snapshot");
    let cfg = write_config(
        &dir,
        "exp.cfg",
        "method = lspe\nenv = chain-stoch\nmax_transitions = 500\nepsilon = 0.3\n\
         seeds = 1\nsave_snapshot = on\nrecord_wallclock = off\n",
    );
    let out = dir.join("out");
    let status = bin().arg("run").arg(&cfg).arg("--output").arg(&out).status().unwrap();
    assert!(status.success());
    let snapshot = out.join("seed_1_snapshot.json");
    assert!(snapshot.is_file());
    let csv_path = dir.join("dict.csv");
    let status = bin()
        .arg("export-dict")
        .arg(&snapshot)
        .arg("--output")
        .arg(&csv_path)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("center_index,insertion_step,action,"));
    assert!(csv.lines().count() >= 3, "expected seeds plus growth:\n{csv}");
}

#[test]
fn export_dict_rejects_a_corrupt_snapshot() {
    let dir = temp_dir("corrupt");
    let path = write_config(&dir, "snapshot.json", "{\"version\": 99}");
    let output = bin().arg("export-dict").arg(&path).output().unwrap();
    assert!(!output.status.success());
}
