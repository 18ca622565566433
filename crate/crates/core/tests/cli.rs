use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regime-dual"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env_remove("REGIME_DUAL_OUT_DIR")
        .output()
        .unwrap()
}

fn config(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn write_doc(dir: &Path, doc: &Value) -> String {
    let p = dir.join("model.json");
    fs::write(&p, serde_json::to_string(doc).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

fn gaussian_doc() -> Value {
    serde_json::from_str(&fs::read_to_string(configs().join("gaussian_signals.json")).unwrap()).unwrap()
}

#[test]
fn missing_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = gaussian_doc();
    doc["utility"].as_object_mut().unwrap().remove("kappa");
    let cfg = write_doc(dir.path(), &doc);
    let o = run(&["--config", &cfg, "solve"], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("utility.kappa"));
}

#[test]
fn merton_surface_is_flat_in_x_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--config", &config("merton.json"), "--grid-nx", "50", "--grid-nt", "200", "solve"];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&args, &a).status.code(), Some(0));
    assert_eq!(run(&args, &b).status.code(), Some(0));
    let csv = fs::read_to_string(a.join("surface.csv")).unwrap();
    assert_eq!(csv, fs::read_to_string(b.join("surface.csv")).unwrap());
    for line in csv.lines().skip(1) {
        let v: Vec<f64> = line.split(',').skip(1).map(|s| s.parse().unwrap()).collect();
        assert!(v.iter().all(|x| (x - v[0]).abs() <= 1e-12));
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["outputs"], json!(["surface.csv", "bounds.json"]));
    for f in manifest["outputs"].as_array().unwrap() {
        assert!(a.join(f.as_str().unwrap()).exists());
    }
}

#[test]
fn manifest_round_trip_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let o = run(&["--config", &config("gaussian_signals.json"), "--set", "market.mu1=0.1", "--grid-nx", "50", "--grid-nt", "100", "solve"], &a);
    assert!(o.status.success());
    let manifest = a.join("manifest.json").to_string_lossy().into_owned();
    let b = dir.path().join("b");
    assert!(run(&["--config", &manifest, "--grid-nx", "50", "--grid-nt", "100", "solve"], &b).status.success());
    assert_eq!(fs::read(a.join("surface.csv")).unwrap(), fs::read(b.join("surface.csv")).unwrap());
    let m: Value = serde_json::from_str(&fs::read_to_string(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["market"]["mu1"], json!(0.1));
}

#[test]
fn unknown_check_lists_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--config", &config("merton.json"), "verify", "--check", "bogus"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("martingale") && err.contains("filter-mean"));
}

#[test]
fn zero_paths_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--config", &config("merton.json"), "--paths", "0", "verify", "--check", "martingale"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn martingale_check_on_merton_passes_for_two_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let mut means = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(seed);
        let o = run(
            &["--config", &config("merton.json"), "--seed", seed, "--paths", "2000", "--dt", "0.01", "--grid-nx", "50", "--grid-nt", "200", "verify", "--check", "martingale"],
            &out,
        );
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let r: Value = serde_json::from_str(&fs::read_to_string(out.join("report_martingale.json")).unwrap()).unwrap();
        assert_eq!(r["pass"], true);
        means.push(r["mean"].as_f64().unwrap());
        let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
        assert!(summary.starts_with("name,mean,stderr"));
    }
    assert_ne!(means[0], means[1]);
}

#[test]
fn blr_cases() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    assert!(run(&["--config", &config("gaussian_signals.json"), "blr-check"], &out).status.success());
    let r: Value = serde_json::from_str(&fs::read_to_string(out.join("blr.json")).unwrap()).unwrap();
    assert_eq!(r["passes"], true);

    let out = dir.path().join("m");
    assert!(run(&["--config", &config("merton.json"), "blr-check"], &out).status.success());
    let r: Value = serde_json::from_str(&fs::read_to_string(out.join("blr.json")).unwrap()).unwrap();
    assert_eq!(r["passes"], false);
    assert_eq!(r["uninformative"], true);

    let mut doc = gaussian_doc();
    doc["signal"] = json!({"lambda": 1.0, "family": "tabulated",
        "params": {"grid": [0.0, 1.0, 2.0, 3.0], "f1": [1.0, 1.0, 0.0, 0.0], "f2": [0.0, 0.0, 1.0, 1.0]}});
    let cfg = write_doc(dir.path(), &doc);
    let o = run(&["--config", &cfg, "blr-check"], &dir.path().join("t"));
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_filter_strategy_and_oracle_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let g = config("gaussian_signals.json");
    let out = dir.path().join("sim");
    assert!(run(&["--config", &g, "--paths", "2", "--dt", "0.01", "simulate"], &out).status.success());
    let world = fs::read_to_string(out.join("world_1.csv")).unwrap();
    assert!(world.starts_with("t,alpha,S,pi\n"));
    assert_eq!(world.lines().count(), 102);
    assert!(fs::read_to_string(out.join("events_0.csv")).unwrap().starts_with("event_time,mark\n"));

    let out = dir.path().join("filter");
    assert!(run(&["--config", &g, "--dt", "0.01", "filter"], &out).status.success());
    assert!(out.join("filter.csv").exists() && out.join("filter_jumps.csv").exists());

    let out = dir.path().join("strategy");
    assert!(run(&["--config", &g, "--grid-nx", "50", "--grid-nt", "100", "strategy", "--time-rows", "5"], &out).status.success());
    assert!(fs::read_to_string(out.join("strategy.csv")).unwrap().starts_with("t,x,lambda"));

    let out = dir.path().join("oracle");
    let o = run(&["--config", &config("merton.json"), "--grid-nx", "50", "--grid-nt", "200", "oracle"], &out);
    assert!(o.status.success());
    assert_eq!(run(&["--config", &g, "oracle"], &dir.path().join("o2")).status.code(), Some(1));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_regime-dual"))
        .args(["--config", &config("merton.json"), "blr-check"])
        .env("REGIME_DUAL_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("blr.json").exists());
}
