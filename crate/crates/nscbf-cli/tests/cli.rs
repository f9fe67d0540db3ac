//! End-to-end checks of the artifact pipeline and the binary's exit
//! codes.

use std::fs;
use std::path::Path;
use std::process::Command;

use nscbf_cli::config::{parse_config, Overrides, RunConfig, ScenarioKind};
use nscbf_cli::output::SummaryFile;
use nscbf_cli::run::run;

fn tiny_config(dir: &Path) -> RunConfig {
    parse_config(
        Some("trials = 1\nhorizon = 0.01\n"),
        None,
        &Overrides {
            output_dir: Some(dir.to_path_buf()),
            ..Overrides::default()
        },
    )
    .unwrap()
}

#[test]
fn tiny_run_produces_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let report = run(&config).unwrap();
    assert_eq!(report.summary.n_trials, 1);
    assert_eq!(report.summary.failures.count, 0);

    let csv = fs::read_to_string(dir.path().join("trajectories/trial_0.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    // header + ceil(0.01/1e-3) + 1 = 11 state rows
    assert_eq!(lines.len(), 12);
    assert_eq!(lines[0], "t,x1,x2,u1,u2,h,active_leaves");
    assert!(lines.iter().all(|l| l.matches(',').count() == 6));
    // final state row carries no control sample
    assert!(lines[11].contains(",,"));

    assert!(dir.path().join("summary.json").exists());
    assert!(dir.path().join("plots/overview.svg").exists());
    assert!(dir.path().join("plots/control.svg").exists());
    let svg = fs::read_to_string(dir.path().join("plots/overview.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn summary_json_round_trips_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    run(&config).unwrap();
    let text = fs::read_to_string(dir.path().join("summary.json")).unwrap();
    let parsed: SummaryFile = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed.config, config);
    assert_eq!(parsed.artifact_version, env!("CARGO_PKG_VERSION"));
    assert_eq!(parsed.summary.n_trials, 1);
}

#[test]
fn reruns_write_byte_identical_csvs() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let mut config = tiny_config(dir_a.path());
    config.trials = 2;
    run(&config).unwrap();
    config.output_dir = dir_b.path().to_path_buf();
    run(&config).unwrap();
    for k in 0..2 {
        let a = fs::read(dir_a.path().join(format!("trajectories/trial_{k}.csv"))).unwrap();
        let b = fs::read(dir_b.path().join(format!("trajectories/trial_{k}.csv"))).unwrap();
        assert_eq!(a, b, "trial {k} differs between reruns");
    }
}

#[test]
fn swap_run_writes_joint_state_columns() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config(
        Some("scenario = \"multi-swap\"\ntrials = 1\nhorizon = 0.01\nn_agents = 3\n"),
        None,
        &Overrides {
            output_dir: Some(dir.path().to_path_buf()),
            ..Overrides::default()
        },
    )
    .unwrap();
    run(&config).unwrap();
    let csv = fs::read_to_string(dir.path().join("trajectories/trial_0.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    // t + 6 states + 6 controls + h + active_leaves
    assert_eq!(header.split(',').count(), 15);
    assert!(header.ends_with("h,active_leaves"));
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nscbf"))
}

#[test]
fn binary_exit_codes() {
    // invalid range -> 1
    let out = bin().args(["--sigma=-1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma"));

    // infeasible scenario construction -> 1
    let out = bin()
        .args(["--scenario", "multi-swap", "--collision-radius", "0.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // unknown flag -> 1
    let out = bin().args(["--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // successful tiny run -> 0
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "--trials",
            "1",
            "--horizon",
            "0.01",
            "--output-dir",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    // every trial fails (oversized epsilon pulls in a negative-valued
    // coverage leaf immediately) -> 2
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "--trials",
            "2",
            "--horizon",
            "0.01",
            "--epsilon",
            "10",
            "--output-dir",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn env_seed_is_lowest_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("NSCBF_SEED", "123")
        .args([
            "--trials",
            "1",
            "--horizon",
            "0.01",
            "--output-dir",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("summary.json")).unwrap();
    let parsed: SummaryFile = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed.config.seed, 123);

    // explicit flag wins over the environment
    let out = bin()
        .env("NSCBF_SEED", "123")
        .args([
            "--trials",
            "1",
            "--horizon",
            "0.01",
            "--seed",
            "5",
            "--output-dir",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("summary.json")).unwrap();
    let parsed: SummaryFile = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed.config.seed, 5);

    let out = bin().env("NSCBF_SEED", "junk").args(["--trials", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn scenario_kind_serde_names() {
    assert_eq!(
        serde_json::to_string(&ScenarioKind::SingleBoolean).unwrap(),
        "\"single-boolean\""
    );
    assert_eq!(
        serde_json::to_string(&ScenarioKind::MultiSwap).unwrap(),
        "\"multi-swap\""
    );
}
