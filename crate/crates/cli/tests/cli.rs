use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"{"grid": {"axes": [{"lo": -10, "hi": 10, "n": 301}]}, "solver": {"t_end": 2.0, "dt": 0.05}, "study": {"pairs": 20}}"#;

fn nfield(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nfield")).args(args).current_dir(dir).output().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn with_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn simulate_writes_artifacts_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(dir.path(), SMALL);
    let out = nfield(&["simulate", "--config", &cfg, "--out", "run"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = read_json(&dir.path().join("run/manifest.json"));
    assert_eq!(manifest["status"], "ok");
    for file in ["trajectory.csv", "bounds.csv"] {
        assert!(dir.path().join("run").join(file).exists());
        assert_eq!(manifest["outputs"][file].as_str().unwrap().len(), 64);
    }
    assert!(!dir.path().join("run/.nfield.lock").exists());
}

#[test]
fn checksums_are_reproducible_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(dir.path(), SMALL);
    let runs: Vec<Value> = [("a", "1"), ("b", "1"), ("c", "4")]
        .iter()
        .map(|(name, threads)| {
            let out = nfield(&["study", "contraction", "--config", &cfg, "--out", name, "--seed", "11", "--threads", threads], dir.path());
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            read_json(&dir.path().join(name).join("manifest.json"))["outputs"].clone()
        })
        .collect();
    assert!(runs[0].as_object().is_some_and(|m| !m.is_empty()));
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn contraction_study_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(dir.path(), SMALL);
    let out = nfield(&["study", "contraction", "--config", &cfg, "--out", "s"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let verdict = read_json(&dir.path().join("s/verdict.json"));
    assert_eq!(verdict["pass"], true);
    assert!(dir.path().join("s/contraction.csv").exists());
}

#[test]
fn invalid_config_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(dir.path(), r#"{"model": {"gamma": -1}, "grid": {"axes": [{"lo": 1, "hi": 0, "n": 5}]}, "bogus": 1}"#);
    let out = nfield(&["validate", "--config", &cfg, "--out", "v"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bogus") && stderr.contains("model.gamma"), "{stderr}");
    let manifest = read_json(&dir.path().join("v/manifest.json"));
    assert_eq!(manifest["status"], "error");
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = nfield(&["integrate"], dir.path());
    assert!(!out.status.success());
}

/// Even ground state of a finite well: `sqrt(E) tan(sqrt(E) a) = sqrt(V0 - E)`.
fn even_ground_state(a: f64, v0: f64) -> f64 {
    let f = |e: f64| e.sqrt() * (e.sqrt() * a).tan() - (v0 - e).sqrt();
    let (mut lo, mut hi) = (1e-12, ((std::f64::consts::FRAC_PI_2 / a).powi(2) - 1e-12).min(v0));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn schrodinger_well_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = nfield(&["schrodinger", "--well", "1,2", "--lambda", "1", "--out", "w"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&dir.path().join("w/schrodinger.json"));
    assert_eq!(doc["V0"], 2.0);
    let e0 = doc["energies"][0].as_f64().unwrap();
    let exact = even_ground_state(1.0, 2.0);
    assert!((e0 - exact).abs() < 1e-4, "{e0} vs {exact}");
    let csv = std::fs::read_to_string(dir.path().join("w/states.csv")).unwrap();
    assert!(csv.starts_with("x,psi_0"));
}
