mod common;

use std::sync::OnceLock;

use common::{ok, pdwrist, read_json, tiny_workspace};
use pdwrist::config::RunConfig;
use pdwrist_cli::RESOLVED_CONFIG_FILE;
use tempfile::TempDir;

fn workspace() -> &'static TempDir {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        tiny_workspace(dir.path());
        dir
    })
}

#[test]
fn train_writes_report_curve_and_checkpoint() {
    let w = workspace().path();
    ok(w, &["--config", "tiny.json", "train", "--cache", "cache", "--out", "t0"]);
    let m = read_json(&w.join("t0/metrics.json"));
    assert_eq!(m["fold"], 0);
    assert!(m["metrics"]["head1"]["accuracy"].is_number());
    let curve = std::fs::read_to_string(w.join("t0/loss_curve.csv")).unwrap();
    assert!(curve.starts_with("epoch,train_loss,val_loss,lr"));
    assert_eq!(curve.lines().count(), 2);
    assert!(w.join("t0/model.ckpt").exists());
    let echo = std::fs::read_to_string(w.join("t0").join(RESOLVED_CONFIG_FILE)).unwrap();
    assert_eq!(RunConfig::from_json(&echo).unwrap().model.d, 8);

    ok(w, &["--config", "tiny.json", "stream-bench", "--model", "t0/model.ckpt", "--out", "s0"]);
    let bench = read_json(&w.join("s0/bench.json"));
    for k in ["mean_ms", "std_ms", "p95_ms", "fps"] {
        assert!(bench[k].as_f64().unwrap() >= 0.0, "{k}");
    }
    let preds = std::fs::read_to_string(w.join("s0/predictions.csv")).unwrap();
    assert!(preds.lines().nth(1).unwrap().starts_with("255,"));

    ok(w, &["--config", "tiny.json", "export-attn", "--model", "t0/model.ckpt", "--cache", "cache", "--window-id", "3", "--out", "a0"]);
    let meta = read_json(&w.join("a0/window.json"));
    assert_eq!(meta["files"].as_array().unwrap().len(), 4);
}

#[test]
fn cv_reports_every_fold() {
    let w = workspace().path();
    let out = pdwrist(w, &["--config", "tiny.json", "cv", "--cache", "cache", "--out", "cv0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("HC-vs-PD") && table.contains("mean"));
    let m = read_json(&w.join("cv0/metrics.json"));
    assert_eq!(m["folds"].as_array().unwrap().len(), 5);
    for k in ["head1_accuracy", "head2_accuracy"] {
        assert!(m["aggregate"][k]["mean"].is_number() && m["aggregate"][k]["std"].is_number());
    }
    for k in 0..5 {
        assert!(w.join(format!("cv0/fold{k}_loss_curve.csv")).exists());
    }
}

#[test]
fn no_bandpass_is_recorded_in_the_echo() {
    let w = workspace().path();
    ok(w, &["--config", "tiny.json", "preprocess", "--data", "data", "--out", "raw", "--no-bandpass"]);
    let echo = read_json(&w.join("raw").join(RESOLVED_CONFIG_FILE));
    assert_eq!(echo["dsp"]["bandpass"], false);
    let echo = read_json(&w.join("cache").join(RESOLVED_CONFIG_FILE));
    assert_eq!(echo["dsp"]["bandpass"], true);
}

#[test]
fn ssl_commands_chain() {
    let w = workspace().path();
    ok(w, &["--config", "tiny.json", "pretrain", "--cache", "cache", "--out", "p0"]);
    let m = read_json(&w.join("p0/metrics.json"));
    assert_eq!(m["epochs"], 1);
    ok(w, &["--config", "tiny.json", "finetune", "--cache", "cache", "--init", "p0/ssl.ckpt", "--out", "f0"]);
    ok(w, &["--config", "tiny.json", "probe", "--cache", "cache", "--init", "p0/ssl.ckpt", "--out", "pr0"]);
    ok(w, &["--config", "tiny.json", "finetune", "--scratch", "--cache", "cache", "--out", "sc0"]);
    for d in ["f0", "pr0", "sc0"] {
        let csv = std::fs::read_to_string(w.join(d).join("label_efficiency.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2, "{d}");
    }
    let out = pdwrist(w, &["--config", "tiny.json", "finetune", "--cache", "cache", "--out", "f1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_fails_with_one_json_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"x": 1, "train": {"y": 2, "lr": 0.001}}"#).unwrap();
    let out = pdwrist(dir.path(), &["--config", "bad.json", "synth", "--out", "d"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let last = stderr.lines().last().unwrap();
    let v: serde_json::Value = serde_json::from_str(last).unwrap();
    assert_eq!(v["error"], "ConfigError");
    let details: Vec<&str> = v["details"].as_array().unwrap().iter().map(|d| d.as_str().unwrap()).collect();
    assert!(details.contains(&"unknown key x") && details.contains(&"unknown key train.y"), "{details:?}");
    assert!(!dir.path().join("d").exists());

    std::fs::write(dir.path().join("neg.json"), r#"{"train": {"lr": -1}}"#).unwrap();
    let out = pdwrist(dir.path(), &["--config", "neg.json", "synth", "--out", "d"]);
    assert_eq!(out.status.code(), Some(2));
}
