use std::fs;
use std::path::{Path, PathBuf};

use pdwrist::config::RunConfig;
use pdwrist::dsp::design_butter_bandpass;
use pdwrist::ingest::{load_pads, save_cohort, synth_cohort_with, ArtifactConfig, SynthConfig};
use pdwrist::model::{export_attention, load_model, save_model};
use pdwrist::ssl::{pretrain as ssl_pretrain, run_fraction, write_label_efficiency_csv, StrategyRegistry};
use pdwrist::stream::{bench, read_samples_csv, run_stream, write_predictions_csv};
use pdwrist::train::{
    cross_validate, train_fold, write_json, write_loss_curve, Control, CvReport, FoldReport,
};
use pdwrist::windowing::WindowCache;
use pdwrist::{Error, Mode, Result, BILATERAL_CHANNELS};
use serde_json::json;

use crate::{AdaptArgs, CvArgs, Ctx, ExportAttnArgs, PreprocessArgs, PretrainArgs, StreamBenchArgs, SynthArgs, TrainArgs};

pub const RESOLVED_CONFIG_FILE: &str = "run_config.resolved.json";

fn prepare_out(ctx: &Ctx, out: &Path) -> Result<PathBuf> {
    ctx.config.validate()?;
    let dir = ctx.path(out);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(RESOLVED_CONFIG_FILE), ctx.config.to_json())?;
    Ok(dir)
}

fn load_cache(ctx: &Ctx, path: &Path) -> Result<WindowCache> {
    let cache = WindowCache::load(&ctx.path(path))?;
    if cache.windowing.window_len != ctx.config.model.window_len {
        return Err(Error::StateMismatch(format!(
            "cache windows have {} samples, model expects {}",
            cache.windowing.window_len, ctx.config.model.window_len
        )));
    }
    Ok(cache)
}

pub fn synth(mut ctx: Ctx, a: &SynthArgs) -> Result<()> {
    let s: &mut SynthConfig = &mut ctx.config.data.synth;
    if let Some(n) = a.per_class {
        s.n_per_class = n;
    }
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    if let Some(d) = a.duration {
        s.duration_s = d;
    }
    if a.artifacts && s.artifacts.is_none() {
        s.artifacts = Some(ArtifactConfig::default());
    }
    let dir = prepare_out(&ctx, &a.out)?;
    let cohort = synth_cohort_with(&ctx.config.data.synth)?;
    save_cohort(&cohort, &dir)?;
    log::info!("wrote {} recordings of {} subjects to {}", cohort.recordings.len(), cohort.subjects.len(), dir.display());
    Ok(())
}

pub fn preprocess(mut ctx: Ctx, a: &PreprocessArgs) -> Result<()> {
    if a.no_bandpass {
        ctx.config.dsp.bandpass = false;
    }
    let dir = prepare_out(&ctx, &a.out)?;
    let cohort = load_pads(&ctx.path(&a.data))?;
    let filter = if ctx.config.dsp.bandpass {
        Some(design_butter_bandpass(ctx.config.dsp.filter.clone())?)
    } else {
        None
    };
    let cache = WindowCache::build_with(&cohort, filter.as_ref(), &ctx.config.windowing)?;
    cache.save(&dir)?;
    let counts = cache.set.group_counts();
    log::info!(
        "{} windows (HC {}, PD {}, DD {}), band-pass {}",
        cache.set.len(),
        counts[0],
        counts[1],
        counts[2],
        cache.bandpass
    );
    Ok(())
}

pub fn train(mut ctx: Ctx, a: &TrainArgs) -> Result<()> {
    if let Some(m) = a.mode {
        ctx.config.model.mode = m;
    }
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from(format!("train_fold{}", a.fold)));
    let dir = prepare_out(&ctx, &out)?;
    let cache = load_cache(&ctx, &a.cache)?;
    let dataset = cache.split(a.fold)?;
    log::info!("fold {}: {} train / {} val windows", a.fold, dataset.train.len(), dataset.val.len());
    let outcome = train_fold(&dataset, &ctx.config.model, &ctx.config.train, &mut |_| Control::Continue)?;
    let report = FoldReport::new(a.fold, &dataset, &outcome);
    write_json(&dir.join("metrics.json"), &report)?;
    write_loss_curve(&dir.join("loss_curve.csv"), &outcome.curve)?;
    save_model(&dir.join("model.ckpt"), &outcome.model, json!({ "fold": a.fold, "best_epoch": outcome.best_epoch }))?;
    log::info!("best epoch {}: accuracy {:.4}", outcome.best_epoch, outcome.val_metrics.accuracy());
    Ok(())
}

pub fn cv(mut ctx: Ctx, a: &CvArgs) -> Result<()> {
    if let Some(m) = a.mode {
        ctx.config.model.mode = m;
    }
    let dir = prepare_out(&ctx, &a.out)?;
    let cache = load_cache(&ctx, &a.cache)?;
    let report = cross_validate(&cache.set, &cache.folds, &ctx.config.model, &ctx.config.train, &mut |k, _, outcome| {
        write_loss_curve(&dir.join(format!("fold{k}_loss_curve.csv")), &outcome.curve)
    })?;
    write_json(&dir.join("metrics.json"), &report)?;
    println!("{}", table(&report));
    Ok(())
}

/// Per-fold accuracy table followed by mean ± std.
fn table(report: &CvReport) -> String {
    let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.2}", 100.0 * v));
    let mut lines = vec![match report.mode {
        Mode::Hierarchical => "fold  HC-vs-PD  PD-vs-DD".to_string(),
        Mode::ThreeClass => "fold  3-class".to_string(),
    }];
    for f in &report.folds {
        let m = &f.metrics;
        lines.push(match report.mode {
            Mode::Hierarchical => format!(
                "{:>4}  {:>8}  {:>8}",
                f.fold,
                pct(m.head1.map(|h| h.accuracy)),
                pct(m.head2.map(|h| h.accuracy))
            ),
            Mode::ThreeClass => format!("{:>4}  {:>7}", f.fold, pct(m.three_class.as_ref().map(|t| t.accuracy))),
        });
    }
    let agg = |k: &str| {
        report
            .aggregate
            .get(k)
            .map_or("-".to_string(), |m| format!("{:.2}±{:.2}", 100.0 * m.mean, 100.0 * m.std))
    };
    lines.push(match report.mode {
        Mode::Hierarchical => format!("mean  {}  {}", agg("head1_accuracy"), agg("head2_accuracy")),
        Mode::ThreeClass => format!("mean  {}", agg("three_class_accuracy")),
    });
    lines.join("\n")
}

pub fn pretrain(ctx: Ctx, a: &PretrainArgs) -> Result<()> {
    let dir = prepare_out(&ctx, &a.out)?;
    let cache = load_cache(&ctx, &a.cache)?;
    let dataset = cache.split(ctx.config.ssl.eval_fold)?;
    let cfg = &ctx.config;
    let outcome = ssl_pretrain(&dataset.train.windows, &cfg.model, &cfg.ssl, &cfg.train, &mut |_| Control::Continue)?;
    let mut csv = String::from("epoch,train_loss,eval_loss,lr\n");
    for e in &outcome.curve {
        csv.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_loss, e.eval_loss, e.lr));
    }
    fs::write(dir.join("ssl_curve.csv"), csv)?;
    let final_loss = outcome.curve.last().map_or(outcome.initial_loss, |e| e.eval_loss);
    write_json(
        &dir.join("metrics.json"),
        &json!({ "initial_loss": outcome.initial_loss, "final_loss": final_loss, "epochs": outcome.curve.len() }),
    )?;
    save_model(&dir.join("ssl.ckpt"), &outcome.model, json!({ "kind": "ssl", "eval_fold": cfg.ssl.eval_fold }))?;
    Ok(())
}

pub fn adapt(mut ctx: Ctx, a: &AdaptArgs, strategy_name: &str) -> Result<()> {
    if let Some(f) = a.fraction {
        ctx.config.ssl.label_fractions = vec![f];
    }
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from(strategy_name));
    let dir = prepare_out(&ctx, &out)?;
    let registry = StrategyRegistry::default();
    let strategy = registry.get(strategy_name)?;
    let pretrained = match &a.init {
        Some(p) => Some(load_model::<f32>(&ctx.path(p))?.0),
        None if strategy_name == "supervised" => None,
        None => return Err(Error::InvalidArgument(format!("{strategy_name} needs --init"))),
    };
    let cache = load_cache(&ctx, &a.cache)?;
    let dataset = cache.split(ctx.config.ssl.eval_fold)?;
    let cfg = &ctx.config;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &fraction in &cfg.ssl.label_fractions {
        let (row, outcome) =
            run_fraction(strategy, pretrained.as_ref(), &dataset, fraction, &cfg.model, &cfg.train, cfg.ssl.seed)?;
        log::info!("{strategy_name} fraction {fraction}: head1 {:.4} head2 {:.4}", row.head1_acc, row.head2_acc);
        reports.push(json!({ "fraction": fraction, "report": FoldReport::new(cfg.ssl.eval_fold, &dataset, &outcome) }));
        rows.push(row);
    }
    write_label_efficiency_csv(&dir.join("label_efficiency.csv"), &rows)?;
    write_json(&dir.join("metrics.json"), &json!({ "mode": strategy_name, "runs": reports }))?;
    Ok(())
}

/// A 100 Hz stream from the first synthetic recording, 12 values per row.
fn synthetic_stream(cfg: &RunConfig) -> Result<Vec<Vec<f64>>> {
    let synth = SynthConfig { n_per_class: 1, seed: cfg.stream.seed, ..cfg.data.synth.clone() };
    let cohort = synth_cohort_with(&synth)?;
    let rec = cohort
        .recordings
        .iter()
        .max_by_key(|r| r.rows())
        .ok_or_else(|| Error::MalformedDataset("empty synthetic cohort".into()))?;
    Ok((0..rec.rows())
        .map(|i| {
            let mut row = Vec::with_capacity(BILATERAL_CHANNELS);
            row.extend_from_slice(rec.left.row(i));
            row.extend_from_slice(rec.right.row(i));
            row
        })
        .collect())
}

pub fn stream_bench(ctx: Ctx, a: &StreamBenchArgs) -> Result<()> {
    let dir = prepare_out(&ctx, &a.out)?;
    let (model, _) = load_model::<f32>(&ctx.path(&a.model))?;
    let samples = match &a.input {
        Some(p) => read_samples_csv(&ctx.path(p))?,
        None => synthetic_stream(&ctx.config)?,
    };
    let scfg = &ctx.config.stream;
    let preds = run_stream(&model, scfg, &samples)?;
    write_predictions_csv(&dir.join("predictions.csv"), &preds)?;
    let run = bench(&model, scfg.bench_windows, scfg.warmup_windows, scfg.seed)?;
    write_json(&dir.join("bench.json"), &run.report)?;
    log::info!(
        "{} predictions from {} samples; forward {:.2} ± {:.2} ms (p95 {:.2})",
        preds.len(),
        samples.len(),
        run.report.mean_ms,
        run.report.std_ms,
        run.report.p95_ms
    );
    Ok(())
}

pub fn export_attn(ctx: Ctx, a: &ExportAttnArgs) -> Result<()> {
    let dir = prepare_out(&ctx, &a.out)?;
    let (model, _) = load_model::<f32>(&ctx.path(&a.model))?;
    let cache = WindowCache::load(&ctx.path(&a.cache))?;
    let w = cache.set.windows.get(a.window_id).ok_or_else(|| {
        Error::InvalidArgument(format!("window id {} out of range 0..{}", a.window_id, cache.set.len()))
    })?;
    let maps = export_attention(&model, &w.left, &w.right)?;
    let files = maps.write_csv(&dir)?;
    write_json(
        &dir.join("window.json"),
        &json!({
            "window_id": a.window_id,
            "subject_id": w.subject_id,
            "group": w.group,
            "task": w.task,
            "offset": w.offset,
            "files": files.iter().filter_map(|p| p.file_name()?.to_str().map(String::from)).collect::<Vec<_>>(),
        }),
    )?;
    Ok(())
}
