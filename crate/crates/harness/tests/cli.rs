use std::process::Command;

use stackelberg_core::experiment::ExperimentConfig;
use stackelberg_harness::files::{load_config, save_config};

fn stackelberg() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stackelberg"));
    cmd.env("STACKELBERG_LOG", "off");
    cmd
}

#[test]
fn run_then_certify_from_the_written_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    let mut config = ExperimentConfig::reference(1e-3, 0);
    config.rounds = 7;
    config.n_warm = 3;
    config.acquisition.grid_points_per_dim = 15;
    config.regret_oracle_grid = 25;
    save_config(&config_path, &config).unwrap();

    let out = dir.path().join("run");
    let run = stackelberg()
        .args(["run", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&out)
        .args(["--seed", "3"])
        .output()
        .unwrap();
    assert!(run.status.success());
    assert!(String::from_utf8(run.stdout).unwrap().starts_with("best round"));
    assert_eq!(load_config(&out.join("config.json")).unwrap().seed, 3);

    let output = stackelberg()
        .args(["certify", "--rounds"])
        .arg(out.join("rounds.csv"))
        .arg("--config")
        .arg(&config_path)
        .args(["--epsilon", "1e-1"])
        .output()
        .unwrap();
    let text = String::from_utf8(output.stdout).unwrap();
    let cert: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(cert["certified"], serde_json::Value::Bool(output.status.success()));
    assert_eq!(cert["epsilon_target"], serde_json::json!(0.1));
}

#[test]
fn baseline_and_reference_config_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reference.json");
    let status = stackelberg()
        .args(["reference-config", "--inner-tol", "0.3", "--seed", "4", "--out"])
        .arg(&path)
        .status()
        .unwrap();
    assert!(status.success());
    let mut config = load_config(&path).unwrap();
    assert_eq!(config, ExperimentConfig::reference(0.3, 4));

    config.regret_oracle_grid = 20;
    save_config(&path, &config).unwrap();
    let output = stackelberg().args(["baseline", "--config"]).arg(&path).output().unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    let value: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("baseline "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((0.0..1e-6).contains(&value));
}

#[test]
fn missing_config_reports_the_path() {
    let output = stackelberg()
        .args(["baseline", "--config", "/nonexistent/config.json"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("/nonexistent/config.json"));
}
