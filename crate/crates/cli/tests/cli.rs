use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use recourse_core::harness::Settings;
use serde_json::Value;

const SMALL: &str = r#"
[simulation]
horizon = 5
k = 10
initial_population = 60
arrivals_per_step = 10

[q]
values = [0.0, 3.0]

[effort]
conditions = [{ e_a = 1.0, e_d = 1.0 }]

[interventions]
enabled = ["baseline", "cns"]

[seeds]
count = 2
"#;

fn recourse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recourse")).args(args).output().unwrap()
}

fn json_line(bytes: &[u8]) -> Value {
    let text = String::from_utf8_lossy(bytes);
    let line = text.lines().last().unwrap_or_else(|| panic!("no output"));
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {line}"))
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(&path, SMALL).unwrap();
    path.display().to_string()
}

#[test]
fn run_keeps_event_logs() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("out");
    let o = recourse(&["run", "--config", &config, "--out", out.to_str().unwrap(), "--seeds", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = json_line(&o.stdout);
    assert_eq!(summary["status"], "ok");
    assert_eq!(summary["executed"], 2);
    assert_eq!(summary["cells"].as_array().unwrap().len(), 1);

    let logs = out.join("logs");
    let cell = fs::read_dir(&logs).unwrap().next().unwrap().unwrap().path();
    for seed in ["seed-0", "seed-1"] {
        for file in ["events.csv", "events.jsonl", "manifest.json", "metrics.json"] {
            assert!(cell.join(seed).join(file).exists(), "{seed}/{file}");
        }
    }
}

#[test]
fn grid_table_metrics_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    let o = recourse(&["grid", "--config", &config, "--out", out_s, "--workers", "2", "--keep-logs"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json_line(&o.stdout)["executed"], 2 * 2 * 2);
    for sub in ["logs", "aggregate", "tables", "plots"] {
        assert!(out.join(sub).is_dir(), "{sub}");
    }
    let table = fs::read(out.join("tables/table.csv")).unwrap();

    let o = recourse(&["table", "--out", out_s]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("cns"));
    assert_eq!(fs::read(out.join("tables/table.csv")).unwrap(), table);

    let aggregate = fs::read(out.join("aggregate/metrics.csv")).unwrap();
    let o = recourse(&["metrics", "--out", out_s]);
    assert!(o.status.success());
    assert_eq!(json_line(&o.stdout)["recomputed"], 8);
    assert_eq!(fs::read(out.join("aggregate/metrics.csv")).unwrap(), aggregate);

    let o = recourse(&["plots", "--out", out_s]);
    assert!(o.status.success());
    assert_eq!(json_line(&o.stdout)["files"].as_array().unwrap().len(), 3);

    let again = recourse(&["grid", "--config", &config, "--out", out_s]);
    assert!(again.status.success());
    let summary = json_line(&again.stdout);
    assert_eq!((summary["executed"].as_u64(), summary["reused"].as_u64()), (Some(0), Some(8)));
}

#[test]
fn print_config_resolves_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let o = recourse(&[
        "grid",
        "--config",
        &config,
        "--seeds",
        "7",
        "--seed",
        "40",
        "--profile",
        "paper",
        "--intervention",
        "cns+cda",
        "--print-config",
    ]);
    assert!(o.status.success());
    let s = Settings::from_toml(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(s.seed_count(), 7);
    assert_eq!(s.simulation.seed, 40);
    assert_eq!(s.simulation.horizon, 5);
    assert_eq!(s.interventions.enabled.len(), 1);
    assert_eq!(s.interventions.enabled[0].as_str(), "cns+cda");
    assert!(!dir.path().join("out").exists());

    let o = recourse(&["grid", "--print-config"]);
    let defaults = Settings::from_toml(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(defaults, Settings::default());
}

#[test]
fn bad_config_is_a_machine_readable_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[simulation]\nk = 0\n").unwrap();
    let out = dir.path().join("out");
    let o = recourse(&["grid", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = json_line(&o.stderr);
    assert_eq!(err["status"], "error");
    assert_eq!(err["kind"], "config");
    assert!(err["message"].as_str().unwrap().contains("k"));

    fs::write(&path, "[simulation]\nhorizonn = 3\n").unwrap();
    let o = recourse(&["grid", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json_line(&o.stderr)["kind"], "config");
}

#[test]
fn missing_inputs_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = recourse(&["table", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json_line(&o.stderr)["kind"], "io");

    let o = recourse(&["grid", "--intervention", "magic"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json_line(&o.stderr)["kind"], "usage");

    let o = recourse(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));

    let o = recourse(&["--help"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("grid"));
}
