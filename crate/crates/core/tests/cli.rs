use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn lmrisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmrisk")).args(args).output().expect("run lmrisk")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn simulate_to(dir: &Path, n: usize) -> PathBuf {
    let p = dir.join("episodes.csv");
    let out = lmrisk(&["simulate", "--episodes", &n.to_string(), "--seed", "4", "--out", path_str(&p)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    p
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(lmrisk(&["--help"]).status.code(), Some(0));
    assert_eq!(lmrisk(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(lmrisk(&[]).status.code(), Some(1));
    assert_eq!(lmrisk(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(lmrisk(&["experiment", "--models", "Cox,Weibull"]).status.code(), Some(1));
}

#[test]
fn missing_config_names_the_path() {
    let out = lmrisk(&["experiment", "--config", "/nonexistent/run.cfg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/run.cfg"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "[experiment]\nsplitz = 3\n").unwrap();
    let out = lmrisk(&["experiment", "--config", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("splitz"));
}

#[test]
fn shipped_configs_parse() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs");
    let full = landmark_risk::harness::Config::load(dir.join("default.cfg")).unwrap();
    let defaults = landmark_risk::harness::Config::default();
    assert_eq!(full.experiment, defaults.experiment);
    assert_eq!(full.newton, defaults.newton);
    assert_eq!(full.rmtl, defaults.rmtl);
    assert_eq!(full.landmark_features, defaults.landmark_features);
    assert_eq!(full.transforms, Some(landmark_risk::data::TransformConfig::default()));
    let quick = landmark_risk::harness::Config::load(dir.join("quick.cfg")).unwrap();
    assert_eq!(quick.experiment.splits, 5);
}

#[test]
fn invalid_episode_file_exits_one() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(&p, "ID,LM,eventtime,type\n1,0,4.0,7\n").unwrap();
    let out = lmrisk(&["prepare", "--in", path_str(&p)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn prepare_stacks_with_administrative_censoring() {
    let out = lmrisk(&["prepare", "--in", path_str(&fixture("four_subjects.csv")), "--landmarks", "0-2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "ID,ADMISSION_ID,LM,eventtime,type,MS_is_ICU_unit,LAB_CRP_last");
    // subjects 1-4 at landmarks 0-2, minus subject 3 after day 1.29
    assert_eq!(rows.len() - 1, 11);
    assert!(rows.iter().any(|r| r.starts_with("2,2,0,7,0,")));
}

#[test]
fn simulate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = simulate_to(dir.path(), 300);
    let first = std::fs::read(&a).unwrap();
    let b = simulate_to(dir.path(), 300);
    assert_eq!(first, std::fs::read(&b).unwrap());
    let header = String::from_utf8_lossy(&first).lines().next().unwrap().to_string();
    assert!(header.starts_with("ID,ADMISSION_ID,LM,eventtime,type,"));
}

#[test]
fn fit_predict_evaluate_round_trip() {
    let dir = TempDir::new().unwrap();
    let data = simulate_to(dir.path(), 1500);
    let models = dir.path().join("models");
    let out = lmrisk(&[
        "fit",
        "--in",
        path_str(&data),
        "--models",
        "LR,LM-LR",
        "--landmarks",
        "0-10",
        "--out",
        path_str(&models),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let preds = dir.path().join("preds.csv");
    let out = lmrisk(&[
        "predict",
        "--model",
        path_str(&models.join("LM-LR.json")),
        "--in",
        path_str(&data),
        "--out",
        path_str(&preds),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = dir.path().join("metrics.csv");
    let out = lmrisk(&["evaluate", "--in", path_str(&preds), "--out", path_str(&metrics)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&metrics).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "model,landmark,metric,value,n");
    assert_eq!(lines.len() - 1, 11 * 5);
    let oe: Vec<f64> = lines
        .iter()
        .filter(|l| l.contains(",oe_ratio,"))
        .filter_map(|l| l.split(',').nth(3)?.parse().ok())
        .collect();
    assert!(!oe.is_empty() && oe.iter().all(|v| v.is_finite() && *v > 0.0));
}

#[test]
fn experiment_writes_all_outputs() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("run");
    let out = lmrisk(&[
        "experiment",
        "--models",
        "Cox,LM-LR",
        "--landmarks",
        "0-6",
        "--splits",
        "2",
        "--out",
        path_str(&out_dir),
        "--sequential",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["metrics.csv", "summary.csv", "convergence.csv", "failures.csv"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    assert!(out_dir.join("models/split_000/Cox.json").is_file());
    assert!(out_dir.join("models/split_001/split.json").is_file());
    let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    // Cox at LM0 only; LM-LR at 7 landmarks; 5 metrics; 2 splits
    assert_eq!(metrics.lines().count() - 1, (1 + 7) * 5 * 2);
}

#[test]
fn static_only_plan_reports_landmark_zero() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("run");
    let out = lmrisk(&["experiment", "--models", "LR", "--splits", "2", "--out", path_str(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(metrics.as_bytes());
    let lm = rdr.headers().unwrap().iter().position(|h| h == "landmark").unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2 * 5);
    assert!(rows.iter().all(|r| &r[lm] == "0"));
}
