#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

/// Small enough that a full train or cv finishes in seconds.
pub const TINY_CONFIG: &str = r#"{
  "model": { "d": 8, "n_layers": 1, "n_heads": 2, "ff_dim": 16 },
  "train": { "max_epochs": 1 },
  "ssl": { "epochs": 1, "label_fractions": [0.5] },
  "stream": { "bench_windows": 12, "warmup_windows": 2 }
}"#;

pub fn pdwrist(workdir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdwrist"))
        .arg("--workdir")
        .arg(workdir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

/// Runs a command that must succeed.
pub fn ok(workdir: &Path, args: &[&str]) {
    let out = pdwrist(workdir, args);
    assert!(
        out.status.success(),
        "pdwrist {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).expect("file exists")).expect("valid json")
}

/// Writes the tiny config, a 5-per-class synthetic cohort and its cache.
pub fn tiny_workspace(dir: &Path) {
    std::fs::write(dir.join("tiny.json"), TINY_CONFIG).unwrap();
    ok(dir, &["--config", "tiny.json", "synth", "--out", "data", "--per-class", "5"]);
    ok(dir, &["--config", "tiny.json", "preprocess", "--data", "data", "--out", "cache"]);
}
