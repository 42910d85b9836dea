use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::Group;
use crate::model::{is_head_param, EncoderParams, Mode, ModelConfig};
use crate::rng::{derive, rng_for};
use crate::train::{
    embed_windows, fit, fit_supervised, targets, Control, FitData, FitOutcome, Inputs, TrainConfig,
};
use crate::windowing::{Dataset, WindowSet};

const TAG_FRACTION: u64 = 0xF4AC;
const TAG_HEADS: u64 = 0x4EAD;

/// Keeps `ceil(fraction * n_g)` randomly chosen subjects of every group `g`
/// together with all their windows.
pub fn label_fraction_subset(set: &WindowSet, fraction: f64, seed: u64) -> Result<WindowSet> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("label fraction {fraction} not in (0, 1]")));
    }
    let mut by_group: BTreeMap<Group, BTreeSet<&str>> = BTreeMap::new();
    for w in &set.windows {
        by_group.entry(w.group).or_default().insert(w.subject_id.as_str());
    }
    let mut keep = BTreeSet::new();
    for (group, subjects) in by_group {
        let mut subjects: Vec<&str> = subjects.into_iter().collect();
        let n = ((fraction * subjects.len() as f64) - 1e-9).ceil().max(1.0) as usize;
        subjects.shuffle(&mut rng_for(seed, &[TAG_FRACTION, group.index() as u64]));
        keep.extend(subjects.into_iter().take(n).map(str::to_string));
    }
    Ok(set.filter_subjects(&keep))
}

/// How a labeled subset is learned, optionally starting from a pretrained
/// encoder.
pub trait AdaptationStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn adapt(
        &self,
        pretrained: Option<&EncoderParams<f32>>,
        dataset: &Dataset,
        model_cfg: &ModelConfig,
        cfg: &TrainConfig,
    ) -> Result<FitOutcome>;
}

fn require<'a>(pretrained: Option<&'a EncoderParams<f32>>, name: &str) -> Result<&'a EncoderParams<f32>> {
    pretrained.ok_or_else(|| Error::InvalidArgument(format!("{name} needs a pretrained encoder")))
}

/// Pretrained encoder with freshly drawn heads; the model to be adapted.
pub fn with_fresh_heads(pretrained: &EncoderParams<f32>, cfg: &TrainConfig) -> Result<EncoderParams<f32>> {
    if pretrained.config.mode != Mode::Hierarchical {
        return Err(Error::StateMismatch("adaptation expects a hierarchical model".into()));
    }
    let mut model = pretrained.clone();
    model.reset_heads(derive(cfg.seed, &[TAG_HEADS]))?;
    Ok(model)
}

/// Whole network trained end to end from the pretrained encoder.
pub struct FineTune;

impl AdaptationStrategy for FineTune {
    fn name(&self) -> &'static str {
        "finetune"
    }

    fn adapt(
        &self,
        pretrained: Option<&EncoderParams<f32>>,
        dataset: &Dataset,
        _model_cfg: &ModelConfig,
        cfg: &TrainConfig,
    ) -> Result<FitOutcome> {
        let model = with_fresh_heads(require(pretrained, self.name())?, cfg)?;
        fit_supervised(model, dataset, cfg, |_| true, &mut |_| Control::Continue)
    }
}

/// Frozen encoder; only the two linear heads are trained, on pooled
/// embeddings computed once in eval mode.
pub struct LinearProbe;

impl AdaptationStrategy for LinearProbe {
    fn name(&self) -> &'static str {
        "probe"
    }

    fn adapt(
        &self,
        pretrained: Option<&EncoderParams<f32>>,
        dataset: &Dataset,
        _model_cfg: &ModelConfig,
        cfg: &TrainConfig,
    ) -> Result<FitOutcome> {
        let model = with_fresh_heads(require(pretrained, self.name())?, cfg)?;
        let z_train = embed_windows(&model, &dataset.train.windows)?;
        let z_val = embed_windows(&model, &dataset.val.windows)?;
        let train_targets = targets(&dataset.train.labels, Mode::Hierarchical)?;
        let val_targets = targets(&dataset.val.labels, Mode::Hierarchical)?;
        let data = FitData {
            train: Inputs::Embeddings(&z_train),
            train_targets: &train_targets,
            val: Inputs::Embeddings(&z_val),
            val_targets: &val_targets,
            val_labels: &dataset.val.labels,
            val_windows: &dataset.val.windows,
        };
        fit(model, data, cfg, is_head_param, &mut |_| Control::Continue)
    }
}

/// Fresh model, no pretraining.
pub struct Supervised;

impl AdaptationStrategy for Supervised {
    fn name(&self) -> &'static str {
        "supervised"
    }

    fn adapt(
        &self,
        _pretrained: Option<&EncoderParams<f32>>,
        dataset: &Dataset,
        model_cfg: &ModelConfig,
        cfg: &TrainConfig,
    ) -> Result<FitOutcome> {
        let model = EncoderParams::init(model_cfg, cfg.init_seed())?;
        fit_supervised(model, dataset, cfg, |_| true, &mut |_| Control::Continue)
    }
}

/// Adaptation strategies selectable by name.
pub struct StrategyRegistry {
    entries: Vec<Box<dyn AdaptationStrategy>>,
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        let mut r = Self { entries: Vec::new() };
        r.register(Box::new(FineTune));
        r.register(Box::new(LinearProbe));
        r.register(Box::new(Supervised));
        r
    }
}

impl StrategyRegistry {
    pub fn register(&mut self, s: Box<dyn AdaptationStrategy>) {
        self.entries.retain(|e| e.name() != s.name());
        self.entries.push(s);
    }

    pub fn get(&self, name: &str) -> Result<&dyn AdaptationStrategy> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .map(|e| e.as_ref())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown adaptation mode {name} (have {:?})", self.names())))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }
}

/// One row of `label_efficiency.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelEfficiencyRow {
    pub fraction: f64,
    pub head1_acc: f64,
    pub head2_acc: f64,
    pub mode: String,
}

impl LabelEfficiencyRow {
    pub fn new(fraction: f64, mode: &str, outcome: &FitOutcome) -> Self {
        let m = &outcome.val_metrics;
        Self {
            fraction,
            head1_acc: m.head1.map_or(0.0, |h| h.accuracy),
            head2_acc: m.head2.map_or(0.0, |h| h.accuracy),
            mode: mode.to_string(),
        }
    }

    pub fn mean_acc(&self) -> f64 {
        (self.head1_acc + self.head2_acc) / 2.0
    }
}

/// Adapts on the `fraction` subset of `dataset.train` and scores on
/// `dataset.val`.
pub fn run_fraction(
    strategy: &dyn AdaptationStrategy,
    pretrained: Option<&EncoderParams<f32>>,
    dataset: &Dataset,
    fraction: f64,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    subset_seed: u64,
) -> Result<(LabelEfficiencyRow, FitOutcome)> {
    let subset = Dataset { train: label_fraction_subset(&dataset.train, fraction, subset_seed)?, val: dataset.val.clone() };
    log::info!(
        "{} at fraction {fraction}: {} subjects, {} windows",
        strategy.name(),
        subset.train.subjects().len(),
        subset.train.len()
    );
    let outcome = strategy.adapt(pretrained, &subset, model_cfg, cfg)?;
    Ok((LabelEfficiencyRow::new(fraction, strategy.name(), &outcome), outcome))
}

pub fn write_label_efficiency_csv(path: &Path, rows: &[LabelEfficiencyRow]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "fraction,head1_acc,head2_acc,mode")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.fraction, r.head1_acc, r.head2_acc, r.mode)?;
    }
    w.flush()?;
    Ok(())
}
