use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn kac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kac"))
        .args(args)
        .output()
        .expect("spawn kac")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SIM: &str = r#"{
  "params": {"mu": 5, "rho": 1, "lambda": 1},
  "seed": 1,
  "initial": {"kind": "product", "eta": 2, "velocity": {"kind": "maxwellian", "variance_scale": 2}},
  "checkpoints": [0, 0.5, 1],
  "replicas": 500,
  "observables": [{"kind": "number_mode"}, {"kind": "power_sum", "power": 4}]
}"#;

#[test]
fn simulate_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sim.json", SIM);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out = kac(&["simulate", "--config", &cfg, "--out", a.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = kac(&[
        "simulate", "--config", &cfg, "--out", b.to_str().unwrap(), "--threads", "3",
    ]);
    assert!(out.status.success());
    for f in ["trajectories.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.join("trajectories.csv")).unwrap();
    let mut lines = csv.lines();
    let stamp = lines.next().unwrap();
    assert!(stamp.starts_with("# config_sha256=") && stamp.ends_with("seed=1"), "{stamp}");
    assert_eq!(lines.next().unwrap(), "t,replica,N,sum_v2,obs_number_mode,obs_pow4");
    assert_eq!(lines.count(), 3 * 500);
}

#[test]
fn seed_flag_overrides_config_and_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sim.json", SIM);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(kac(&["simulate", "--config", &cfg, "--out", a.to_str().unwrap()]).status.success());
    assert!(kac(&["simulate", "--config", &cfg, "--out", b.to_str().unwrap(), "--seed", "2"])
        .status
        .success());
    let sa: Value = serde_json::from_slice(&fs::read(a.join("summary.json")).unwrap()).unwrap();
    let sb: Value = serde_json::from_slice(&fs::read(b.join("summary.json")).unwrap()).unwrap();
    assert_eq!(sb["seed"], 2);
    assert_eq!(sa["config_sha256"], sb["config_sha256"]);
    assert_ne!(sa["checkpoints"], sb["checkpoints"]);
}

#[test]
fn spectrum_reports_both_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.json",
        r#"{"params": {"mu": 512, "rho": 1, "lambda": 1}, "seed": 7}"#,
    );
    let out = kac(&["spectrum", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let j: Value =
        serde_json::from_slice(&fs::read(dir.path().join("spectrum.json")).unwrap()).unwrap();
    assert_eq!(j["delta"].as_f64(), Some(-1.0));
    let d2 = j["delta2"].as_f64().unwrap();
    assert!((-1.25..=-1.16160).contains(&d2), "{d2}");
    assert_eq!(j["bounds"]["lower"].as_f64(), Some(-1.25));
    assert_eq!(j["gershgorin"]["all_exceed_delta4"], true);
    assert_eq!(j["truncation"]["k_max"], 40);
    assert!(j["truncation"]["drift"].as_f64().unwrap() < 1e-8);
    assert_eq!(j["seed"], 7);
    assert_eq!(j["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn moments_match_closed_form_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sim.json", SIM);
    assert!(kac(&["moments", "--config", &cfg, "--out", dir.path().to_str().unwrap()])
        .status
        .success());
    let csv = fs::read_to_string(dir.path().join("moments.csv")).unwrap();
    let row: Vec<f64> = csv.lines().nth(2).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    // η = 2 particles at twice the reservoir variance 1/(2π).
    assert_eq!(row[0], 0.0);
    assert_eq!(row[1], 2.0);
    assert!((row[2] - 2.0 / std::f64::consts::PI).abs() < 1e-12);

    let law = fs::read_to_string(dir.path().join("number_law.csv")).unwrap();
    let mass_at_1: f64 = law
        .lines()
        .skip(2)
        .filter(|l| l.starts_with("1,"))
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((mass_at_1 - 1.0).abs() < 1e-9, "{mass_at_1}");
}

#[test]
fn invalid_config_exits_nonzero_with_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"params": {"mu": 5, "rho": 1, "lambda": -2}, "seed": 1}"#,
    );
    let out = kac(&["spectrum", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lambda"), "{err}");

    let cfg = write_config(dir.path(), "noseed.json", r#"{"params": {"mu": 5, "rho": 1, "lambda": 1}}"#);
    let out = kac(&["simulate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));

    let out = kac(&["simulate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn entropy_needs_product_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "e.json",
        r#"{"params": {"mu": 2, "rho": 1, "lambda": 1}, "seed": 1, "checkpoints": [0, 1]}"#,
    );
    let out = kac(&["entropy", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("initial"));
}

#[test]
fn entropy_report_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "e.json",
        r#"{"params": {"mu": 2, "rho": 1, "lambda": 0}, "seed": 3,
            "initial": {"kind": "product", "eta": 0.5, "velocity": {"kind": "maxwellian", "variance_scale": 2.5}},
            "checkpoints": [0, 1], "replicas": 2000, "entropy": {"bootstrap_resamples": 20}}"#,
    );
    let out = kac(&["entropy", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let j: Value =
        serde_json::from_slice(&fs::read(dir.path().join("entropy.json")).unwrap()).unwrap();
    let rows = j["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for key in ["t", "s_analytic", "s_estimate", "bound", "psi", "lemma_ent_slack"] {
        assert!(rows[1].get(key).is_some(), "missing {key}");
    }
    let s0 = j["s0"].as_f64().unwrap();
    assert!((rows[1]["bound"].as_f64().unwrap() - s0 * (-1.0f64).exp()).abs() < 1e-12);
    assert!(rows[1]["s_analytic"].as_f64().unwrap() <= rows[1]["bound"].as_f64().unwrap());
}

#[test]
fn bk_solve_writes_stationary_maxwellian() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bk.json",
        r#"{"params": {"mu": 5, "rho": 1, "lambda": 0}, "seed": 1, "checkpoints": [0, 0.1],
            "grid": {"v_max": 3, "dv": 0.05}, "bk": {"angles": 32}}"#,
    );
    let out = kac(&["bk-solve", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("bk.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("t,v,F"));
    for line in csv.lines().skip(2) {
        let x: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        let gamma = (-std::f64::consts::PI * x[1] * x[1]).exp();
        assert!((x[2] - gamma).abs() < 1e-12, "{line}");
    }
}

#[test]
fn verify_subset_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = kac(&["verify", "--criteria", "6,7", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 2);
    let j: Value =
        serde_json::from_slice(&fs::read(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(j["seed"], 1);
    assert_eq!(j["criteria"].as_array().unwrap().len(), 2);

    let out = kac(&["verify", "--criteria", "42", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        kac_core::config::ExperimentConfig::from_json(&text)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert_eq!(seen, 5);
}
