//! Supervised training: masked hierarchical loss, AdamW, gradient clipping,
//! plateau schedule, the three-class baseline and the fold driver.
//!
//! Each window gets its own autodiff graph; per-sample parameter gradients
//! are computed in parallel and summed in batch order, so results do not
//! depend on the thread count.

mod loss;
mod metrics;
mod optim;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{read_output, EncoderParams, HeadNodes, Mode, ModelConfig, Output};
use crate::rng::{derive, rng_for};
use crate::tensor::{Graph, NodeId, Tensor};
use crate::windowing::{split_by_fold, BilateralWindow, Dataset, FoldSpec, HierLabel, WindowSet};

pub use loss::{active_terms, masked_ce, masked_ce_graph, nll, PROB_FLOOR};
pub use metrics::{
    classification_metrics, evaluate_outputs, mean_std, EvalMetrics, HeadMetrics, SubjectMajority, ThreeClassMetrics,
};
pub use optim::{clip_grad_norm, grad_norm, AdamW, PlateauConfig, PlateauScheduler};

const TAG_INIT: u64 = 0x1A17;
const TAG_SHUFFLE: u64 = 0x5B0F;
const TAG_DROPOUT: u64 = 0xD209;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub clip_norm: f64,
    pub scheduler: PlateauConfig,
    pub adam_betas: [f64; 2],
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            weight_decay: 0.01,
            batch_size: 32,
            max_epochs: 100,
            clip_norm: 1.0,
            scheduler: PlateauConfig::default(),
            adam_betas: [0.9, 0.999],
            adam_eps: 1e-8,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch_size == 0 || self.max_epochs == 0 || !(self.clip_norm > 0.0) {
            return Err(Error::InvalidArgument(
                "lr, batch_size, max_epochs and clip_norm must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Seed for model initialization.
    pub fn init_seed(&self) -> u64 {
        derive(self.seed, &[TAG_INIT])
    }
}

/// Classification target of one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Hier([Option<usize>; 2]),
    Three(usize),
}

impl Target {
    pub fn terms(self) -> usize {
        match self {
            Target::Hier(t) => t.iter().flatten().count(),
            Target::Three(_) => 1,
        }
    }

    pub fn loss(self, out: &Output) -> Result<f64> {
        match (self, out) {
            (Target::Hier(t), Output::Hierarchical { p1, p2 }) => {
                Ok(t[0].map_or(0.0, |c| nll(p1[c])) + t[1].map_or(0.0, |c| nll(p2[c])))
            }
            (Target::Three(c), Output::ThreeClass { p }) => Ok(nll(p[c])),
            _ => Err(Error::StateMismatch("target does not match model mode".into())),
        }
    }
}

pub fn targets(labels: &[HierLabel], mode: Mode) -> Result<Vec<Target>> {
    labels
        .iter()
        .map(|l| match mode {
            Mode::Hierarchical => Ok(Target::Hier([l.hc_pd.class(), l.pd_dd.class()])),
            Mode::ThreeClass => l
                .group()
                .map(|g| Target::Three(g.index()))
                .ok_or_else(|| Error::InvalidArgument(format!("label {l:?} names no group"))),
        })
        .collect()
}

/// Model inputs: raw windows, or precomputed pooled embeddings when only the
/// heads are trained.
#[derive(Debug, Clone, Copy)]
pub enum Inputs<'a> {
    Windows(&'a [BilateralWindow]),
    Embeddings(&'a [Vec<f32>]),
}

impl Inputs<'_> {
    pub fn len(&self) -> usize {
        match self {
            Inputs::Windows(w) => w.len(),
            Inputs::Embeddings(z) => z.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn head_nodes(&self, g: &mut Graph<f32>, model: &EncoderParams<f32>, i: usize) -> Result<HeadNodes> {
        match self {
            Inputs::Windows(w) => Ok(model.forward_graph(g, &w[i].left, &w[i].right)?.heads),
            Inputs::Embeddings(z) => {
                let z = g.constant(Tensor::from_f32(&[1, z[i].len()], &z[i])?);
                model.heads_graph(g, z)
            }
        }
    }
}

/// Per-sample summed loss node and its number of active terms.
fn sample_loss(g: &mut Graph<f32>, heads: HeadNodes, target: Target) -> Result<NodeId> {
    match (heads, target) {
        (HeadNodes::Hierarchical { p1, p2 }, Target::Hier([t1, t2])) => {
            let a = g.cross_entropy(p1, &[t1])?;
            let b = g.cross_entropy(p2, &[t2])?;
            g.add(a, b)
        }
        (HeadNodes::ThreeClass { p }, Target::Three(c)) => g.cross_entropy(p, &[Some(c)]),
        _ => Err(Error::StateMismatch("target does not match model mode".into())),
    }
}

/// Eval-mode head probabilities for every input.
pub fn predict(model: &EncoderParams<f32>, inputs: Inputs<'_>) -> Result<Vec<Output>> {
    (0..inputs.len())
        .into_par_iter()
        .map(|i| {
            let mut g = Graph::new(false, 0);
            let heads = inputs.head_nodes(&mut g, model, i)?;
            Ok(read_output(&g, heads))
        })
        .collect()
}

/// Pooled embeddings of every window, eval mode.
pub fn embed_windows(model: &EncoderParams<f32>, windows: &[BilateralWindow]) -> Result<Vec<Vec<f32>>> {
    windows.par_iter().map(|w| model.encode(&w.left, &w.right)).collect()
}

/// Mean loss over all active terms.
pub fn mean_loss(outputs: &[Output], targets: &[Target]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0;
    for (o, t) in outputs.iter().zip(targets) {
        sum += t.loss(o)?;
        n += t.terms();
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Labeled data for one fit.
#[derive(Debug, Clone, Copy)]
pub struct FitData<'a> {
    pub train: Inputs<'a>,
    pub train_targets: &'a [Target],
    pub val: Inputs<'a>,
    pub val_targets: &'a [Target],
    pub val_labels: &'a [HierLabel],
    /// Needed for subject ids in the metrics.
    pub val_windows: &'a [BilateralWindow],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub val_accuracy: f64,
    pub val_min_head_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Result of a fit: the best-validation-loss model and its history.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: EncoderParams<f32>,
    pub curve: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Validation metrics of the returned model.
    pub val_metrics: EvalMetrics,
    /// Highest validation accuracy seen at any epoch.
    pub best_val_accuracy: f64,
}

/// The optimization loop shared by supervised training, fine-tuning and
/// probing. Parameters failing `trainable` stay fixed.
pub fn fit(
    mut model: EncoderParams<f32>,
    data: FitData<'_>,
    cfg: &TrainConfig,
    trainable: fn(&str) -> bool,
    on_epoch: &mut dyn FnMut(&EpochRecord) -> Control,
) -> Result<FitOutcome> {
    cfg.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::InvalidArgument("training and validation sets must be non-empty".into()));
    }
    let n_params = model.params.len();
    let mut adam = AdamW::new(&model.params, cfg.weight_decay, cfg.adam_betas, cfg.adam_eps);
    let mut sched = PlateauScheduler::new(cfg.lr, cfg.scheduler);
    let mut shuffle_rng = rng_for(cfg.seed, &[TAG_SHUFFLE]);
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    let mut curve = Vec::new();
    let mut best: Option<(usize, f64, EncoderParams<f32>, EvalMetrics)> = None;
    let mut best_val_accuracy = 0.0f64;

    for epoch in 1..=cfg.max_epochs {
        let lr = sched.lr();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut term_sum = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let terms: usize = batch.iter().map(|&i| data.train_targets[i].terms()).sum();
            if terms == 0 {
                continue;
            }
            let scale = 1.0 / terms as f32;
            let results: Result<Vec<(f64, Vec<(usize, Vec<f32>)>)>> = batch
                .par_iter()
                .map(|&i| {
                    let mut g = Graph::new(true, derive(cfg.seed, &[TAG_DROPOUT, epoch as u64, i as u64]));
                    g.set_trainable(trainable);
                    let heads = data.train.head_nodes(&mut g, &model, i)?;
                    let loss = sample_loss(&mut g, heads, data.train_targets[i])?;
                    let grads = g.backward(loss, Some(&[scale]))?;
                    Ok((f64::from(g.value(loss).item()), grads.param_grads()))
                })
                .collect();
            let results = match results {
                Err(Error::Numerical(msg)) => {
                    log::warn!("epoch {epoch}: step skipped: {msg}");
                    continue;
                }
                r => r?,
            };
            let mut acc: Vec<Option<Vec<f32>>> = vec![None; n_params];
            for (l, grads) in results {
                loss_sum += l;
                for (idx, g) in grads {
                    match &mut acc[idx] {
                        Some(a) => a.iter_mut().zip(&g).for_each(|(a, v)| *a += *v),
                        slot @ None => *slot = Some(g),
                    }
                }
            }
            term_sum += terms;
            clip_grad_norm(&mut acc, cfg.clip_norm);
            match adam.step(&mut model.params, &acc, lr) {
                Err(Error::Numerical(msg)) => log::warn!("epoch {epoch}: step skipped: {msg}"),
                r => r?,
            }
        }

        let outputs = predict(&model, data.val)?;
        let val_loss = mean_loss(&outputs, data.val_targets)?;
        let metrics = evaluate_outputs(&outputs, data.val_labels, data.val_windows);
        let record = EpochRecord {
            epoch,
            train_loss: if term_sum == 0 { 0.0 } else { loss_sum / term_sum as f64 },
            val_loss,
            lr,
            val_accuracy: metrics.accuracy(),
            val_min_head_accuracy: metrics.min_head_accuracy(),
        };
        log::info!(
            "epoch {epoch}: train {:.4} val {:.4} acc {:.4} lr {:.2e}",
            record.train_loss,
            val_loss,
            record.val_accuracy,
            lr
        );
        best_val_accuracy = best_val_accuracy.max(record.val_accuracy);
        if best.as_ref().map_or(true, |b| val_loss < b.1) {
            best = Some((epoch, val_loss, model.clone(), metrics));
        }
        sched.step(val_loss);
        let control = on_epoch(&record);
        curve.push(record);
        if control == Control::Stop {
            break;
        }
    }

    let (best_epoch, best_val_loss, model, val_metrics) = best.expect("at least one epoch");
    Ok(FitOutcome { model, curve, best_epoch, best_val_loss, val_metrics, best_val_accuracy })
}

/// Trains a fresh model on one train/validation split.
pub fn train_fold(
    dataset: &Dataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord) -> Control,
) -> Result<FitOutcome> {
    let model = EncoderParams::init(model_cfg, cfg.init_seed())?;
    fit_supervised(model, dataset, cfg, |_| true, on_epoch)
}

/// Single softmax head over {HC, PD, DD} with the same recipe.
pub fn train_three_class(
    dataset: &Dataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord) -> Control,
) -> Result<FitOutcome> {
    let model_cfg = ModelConfig { mode: Mode::ThreeClass, ..model_cfg.clone() };
    train_fold(dataset, &model_cfg, cfg, on_epoch)
}

/// Fits `model` on the windows of `dataset`.
pub fn fit_supervised(
    model: EncoderParams<f32>,
    dataset: &Dataset,
    cfg: &TrainConfig,
    trainable: fn(&str) -> bool,
    on_epoch: &mut dyn FnMut(&EpochRecord) -> Control,
) -> Result<FitOutcome> {
    let mode = model.config.mode;
    let train_targets = targets(&dataset.train.labels, mode)?;
    let val_targets = targets(&dataset.val.labels, mode)?;
    let data = FitData {
        train: Inputs::Windows(&dataset.train.windows),
        train_targets: &train_targets,
        val: Inputs::Windows(&dataset.val.windows),
        val_targets: &val_targets,
        val_labels: &dataset.val.labels,
        val_windows: &dataset.val.windows,
    };
    fit(model, data, cfg, trainable, on_epoch)
}

/// Summary of one fold for reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    pub mode: Mode,
    pub train_windows: usize,
    pub val_windows: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best_val_accuracy: f64,
    pub metrics: EvalMetrics,
}

impl FoldReport {
    pub fn new(fold: usize, dataset: &Dataset, outcome: &FitOutcome) -> Self {
        Self {
            fold,
            mode: outcome.model.config.mode,
            train_windows: dataset.train.len(),
            val_windows: dataset.val.len(),
            epochs_run: outcome.curve.len(),
            best_epoch: outcome.best_epoch,
            best_val_loss: outcome.best_val_loss,
            best_val_accuracy: outcome.best_val_accuracy,
            metrics: outcome.val_metrics.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation across folds.
    pub std: f64,
}

impl MeanStd {
    fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Self { mean, std }
    }
}

/// Cross-validation report: per-fold entries plus mean and population std of
/// each head's accuracy and macro-F1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub mode: Mode,
    pub folds: Vec<FoldReport>,
    pub aggregate: std::collections::BTreeMap<String, MeanStd>,
}

impl CvReport {
    pub fn from_folds(mode: Mode, folds: Vec<FoldReport>) -> Self {
        let mut columns: Vec<(&str, Vec<f64>)> = Vec::new();
        let mut push = |name: &'static str, v: f64| match columns.iter_mut().find(|(n, _)| *n == name) {
            Some((_, col)) => col.push(v),
            None => columns.push((name, vec![v])),
        };
        for f in &folds {
            let m = &f.metrics;
            if let Some(h) = &m.head1 {
                push("head1_accuracy", h.accuracy);
                push("head1_macro_f1", h.macro_f1);
            }
            if let Some(h) = &m.head2 {
                push("head2_accuracy", h.accuracy);
                push("head2_macro_f1", h.macro_f1);
            }
            if let Some(t) = &m.three_class {
                push("three_class_accuracy", t.accuracy);
                push("three_class_macro_f1", t.macro_f1);
            }
            push("average_accuracy", m.accuracy());
        }
        let aggregate = columns.into_iter().map(|(n, v)| (n.to_string(), MeanStd::of(&v))).collect();
        Self { mode, folds, aggregate }
    }
}

/// Runs every fold of `folds` on a windowed set and aggregates the results.
/// `on_fold` receives each finished fold, e.g. to write its artifacts.
pub fn cross_validate(
    all: &WindowSet,
    folds: &FoldSpec,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    on_fold: &mut dyn FnMut(usize, &Dataset, &FitOutcome) -> Result<()>,
) -> Result<CvReport> {
    let mut reports = Vec::with_capacity(folds.k);
    for k in 0..folds.k {
        let dataset = split_by_fold(all, folds, k)?;
        log::info!("fold {k}: {} train / {} val windows", dataset.train.len(), dataset.val.len());
        let outcome = train_fold(&dataset, model_cfg, cfg, &mut |_| Control::Continue)?;
        on_fold(k, &dataset, &outcome)?;
        reports.push(FoldReport::new(k, &dataset, &outcome));
    }
    Ok(CvReport::from_folds(model_cfg.mode, reports))
}

/// `epoch,train_loss,val_loss,lr` rows.
pub fn write_loss_curve(path: &Path, curve: &[EpochRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "epoch,train_loss,val_loss,lr")?;
    for r in curve {
        writeln!(w, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.lr)?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
