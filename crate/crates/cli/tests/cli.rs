use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use loopflow_cli::{config, exit};
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_loopflow"));
    c.env_remove("LOOPFLOW_THREADS");
    c
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn pendulum_text() -> String {
    std::fs::read_to_string(configs_dir().join("circle_pendulum.toml")).unwrap()
}

fn run(dir: &Path, cmd: &str, config_text: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config_text).unwrap();
    bin().arg(cmd).arg("--config").arg(&cfg).arg("--out").arg(dir.join("out")).args(extra).output().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn homology_on_the_pendulum_gives_the_circle() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "homology", &pendulum_text(), &[]);
    assert_eq!(out.status.code(), Some(exit::SUCCESS), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("out/complex.json"));
    assert_eq!(report["data"]["betti"], serde_json::json!([1, 1]));
    assert_eq!(report["data"]["reference_match"]["status"], "match");
    let hash = config::parse(&pendulum_text()).unwrap().hash;
    assert_eq!(report["config_hash"], hash.as_str());
    assert_eq!(report["tolerances"]["capture_radius"], 1e-2);
}

#[test]
fn malformed_config_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "crit", "schema = \"loopflow/1\"\nlevel = [", &[]);
    assert_eq!(out.status.code(), Some(exit::USAGE));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parsing config"));
}

#[test]
fn invalid_values_are_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let text = pendulum_text();
    for bad in [
        text.replace("n_samples = 64", "n_samples = 48"),
        text.replace("schema = \"loopflow/1\"", "schema = \"loopflow/0\""),
        text.replace("rank_tol = 1e-6", "rank_tol = -1.0"),
        text.replace("seed = 7", "seed = 7\nunknown_key = 1"),
    ] {
        let out = run(dir.path(), "crit", &bad, &[]);
        assert_eq!(out.status.code(), Some(exit::USAGE), "{}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn missing_config_flag_is_a_usage_error() {
    let out = bin().arg("crit").output().unwrap();
    assert_eq!(out.status.code(), Some(exit::USAGE));
}

#[test]
fn check_names_the_broken_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let text = pendulum_text() + "\n[check]\nenergy_rel = 1e-12\n";
    let out = run(dir.path(), "check", &text, &[]);
    assert_eq!(out.status.code(), Some(exit::INVARIANT));
    let err = read_json(&dir.path().join("out/error.json"));
    assert_eq!(err["kind"], "invariant");
    assert!(err["message"].as_str().unwrap().contains("energy_identity"));
    let report = read_json(&dir.path().join("out/check_report.json"));
    assert_eq!(report["data"]["passed"], false);
    let failed: Vec<&str> = report["data"]["invariants"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|i| i["passed"] == false)
        .map(|i| i["name"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["energy_identity"]);
}

#[test]
fn check_passes_on_the_pendulum() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "check", &pendulum_text(), &[]);
    assert_eq!(out.status.code(), Some(exit::SUCCESS), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn numerical_failure_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    // the level coincides with the action of the maximum
    let text = pendulum_text().replace("level = 1.0", "level = 0.1");
    let out = run(dir.path(), "admissible", &text, &[]);
    assert_eq!(out.status.code(), Some(exit::NUMERICAL), "{}", String::from_utf8_lossy(&out.stderr));
    let err = read_json(&dir.path().join("out/error.json"));
    assert_eq!(err["kind"], "a-is-critical");
}

#[test]
fn artifacts_are_reproducible_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let text = pendulum_text();
    assert_eq!(run(a.path(), "moduli", &text, &["--threads", "1"]).status.code(), Some(0));
    let cfg = b.path().join("run.toml");
    std::fs::write(&cfg, &text).unwrap();
    let out = bin()
        .args(["moduli", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(b.path().join("out"))
        .env("LOOPFLOW_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    for file in ["orbits.json", "orbit_000.csv", "orbit_001.csv"] {
        let x = std::fs::read(a.path().join("out").join(file)).unwrap();
        let y = std::fs::read(b.path().join("out").join(file)).unwrap();
        assert!(x == y, "{file} differs");
    }
}

#[test]
fn flow_and_admissible_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let text = pendulum_text();
    assert_eq!(run(dir.path(), "flow", &text, &[]).status.code(), Some(0));
    let flow = read_json(&dir.path().join("out/flow.json"));
    assert_eq!(flow["data"]["status"], "converged");
    assert_eq!(flow["data"]["monotonicity_violations"], 0);
    let csv = std::fs::read_to_string(dir.path().join("out/flow_monitors.csv")).unwrap();
    assert!(csv.starts_with("s,action,dsu_l2"));

    assert_eq!(run(dir.path(), "admissible", &text, &[]).status.code(), Some(0));
    let adm = read_json(&dir.path().join("out/admissible.json"));
    let delta = adm["data"]["admissibility"]["delta"].as_f64().unwrap();
    assert!((delta - 0.45).abs() < 1e-9);
    assert_eq!(adm["data"]["inclusions_plus"]["checked"], 512);
}

#[test]
fn example_configs_parse() {
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        config::load(&path).unwrap_or_else(|e| panic!("{}: {e:#}", path.display()));
    }
}
