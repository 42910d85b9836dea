//! Subcommands of the `pdwrist` binary.
//!
//! Every path argument is resolved against `--workdir`. Each command writes
//! the effective configuration to `run_config.resolved.json` in its output
//! directory; passing that file back through `--config` reproduces the run.

mod commands;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pdwrist::config::RunConfig;
use pdwrist::{Error, Mode, Result};

pub use commands::RESOLVED_CONFIG_FILE;

#[derive(Debug, Parser)]
#[command(name = "pdwrist", version, about = "Bilateral wrist IMU pipeline")]
pub struct Cli {
    /// Base directory for every relative path.
    #[arg(long, global = true, default_value = ".")]
    pub workdir: PathBuf,
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic cohort in the PADS layout.
    Synth(SynthArgs),
    /// Preprocess and window a cohort into a cache.
    Preprocess(PreprocessArgs),
    /// Train one fold.
    Train(TrainArgs),
    /// Train every fold and aggregate.
    Cv(CvArgs),
    /// Contrastive pretraining on the training folds.
    Pretrain(PretrainArgs),
    /// Fine-tune a pretrained encoder on a labeled fraction.
    Finetune(AdaptArgs),
    /// Train linear heads on a frozen pretrained encoder.
    Probe(AdaptArgs),
    /// Streaming predictions and latency benchmark.
    StreamBench(StreamBenchArgs),
    /// Dump cross-attention maps for one cached window.
    ExportAttn(ExportAttnArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Task duration in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Add the default 28-31 Hz interference.
    #[arg(long)]
    pub artifacts: bool,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub no_bandpass: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub cache: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
    /// `hierarchical` or `three-class`.
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub cache: PathBuf,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long, default_value = "cv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub cache: PathBuf,
    #[arg(long, default_value = "pretrain")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    #[arg(long)]
    pub cache: PathBuf,
    /// Pretrained checkpoint; required unless `--scratch`.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Labeled fraction; defaults to every `ssl.label_fractions` entry.
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Train from random initialization instead (supervised baseline).
    #[arg(long)]
    pub scratch: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StreamBenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Headered CSV of 12-channel 100 Hz samples; synthesized when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "stream")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportAttnArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub cache: PathBuf,
    /// Index of the window in the cache.
    #[arg(long)]
    pub window_id: usize,
    #[arg(long, default_value = "attention")]
    pub out: PathBuf,
}

/// Context shared by the commands.
pub struct Ctx {
    pub workdir: PathBuf,
    pub config: RunConfig,
}

impl Ctx {
    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.workdir.join(p)
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => {
            let p = if p.is_absolute() { p.clone() } else { cli.workdir.join(p) };
            RunConfig::from_file(&p)?
        }
        None => RunConfig::default(),
    };
    let ctx = Ctx { workdir: cli.workdir.clone(), config };
    match &cli.command {
        Command::Synth(a) => commands::synth(ctx, a),
        Command::Preprocess(a) => commands::preprocess(ctx, a),
        Command::Train(a) => commands::train(ctx, a),
        Command::Cv(a) => commands::cv(ctx, a),
        Command::Pretrain(a) => commands::pretrain(ctx, a),
        Command::Finetune(a) => commands::adapt(ctx, a, if a.scratch { "supervised" } else { "finetune" }),
        Command::Probe(a) => commands::adapt(ctx, a, "probe"),
        Command::StreamBench(a) => commands::stream_bench(ctx, a),
        Command::ExportAttn(a) => commands::export_attn(ctx, a),
    }
}

/// One-line JSON error report.
pub fn error_line(e: &Error) -> String {
    let details = match e {
        Error::Config(items) => serde_json::json!(items),
        _ => serde_json::Value::Null,
    };
    let mut v = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
    if !details.is_null() {
        v["details"] = details;
    }
    v.to_string()
}
