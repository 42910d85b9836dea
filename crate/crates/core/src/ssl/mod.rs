//! Contrastive pretraining and label-efficiency experiments.
//!
//! Positive views come from an [`Augmentation`] registry (time warp and
//! jitter by default); the anchor is always the clean window. Pretraining
//! minimizes InfoNCE over pooled encoder embeddings. Adaptation strategies
//! (`finetune`, `probe`, `supervised`) are selected by name.

mod adapt;
mod augment;
mod loss;
mod pretrain;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adapt::{
    label_fraction_subset, run_fraction, with_fresh_heads, write_label_efficiency_csv, AdaptationStrategy, FineTune,
    LabelEfficiencyRow, LinearProbe, StrategyRegistry, Supervised,
};
pub use augment::{make_batch_pairs, AugmentConfig, Augmentation, AugmentationRegistry, Jitter, TimeWarp, ViewPair};
pub use loss::{info_nce, info_nce_graph};
pub use pretrain::{pretrain, split_bilateral, ssl_eval_loss, PretrainOutcome, SslEpoch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    #[default]
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SslConfig {
    pub temperature: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub similarity: Similarity,
    pub augment: AugmentConfig,
    /// Registered augmentation names; the first is drawn with
    /// `augment.choice_prob`.
    pub augmentations: Vec<String>,
    pub seed: u64,
    /// Label fractions of the label-efficiency sweep.
    pub label_fractions: Vec<f64>,
    /// Held-out fold used for fine-tuning and probing.
    pub eval_fold: usize,
}

impl Default for SslConfig {
    fn default() -> Self {
        Self {
            temperature: 0.1,
            epochs: 20,
            batch_size: 32,
            similarity: Similarity::Cosine,
            augment: AugmentConfig::default(),
            augmentations: vec!["time_warp".into(), "jitter".into()],
            seed: 42,
            label_fractions: vec![0.2, 0.5, 1.0],
            eval_fold: 0,
        }
    }
}

impl SslConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidArgument(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument("contrastive batch size must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.augment.choice_prob) {
            return Err(Error::InvalidArgument("choice_prob must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn registry(&self) -> Result<AugmentationRegistry> {
        AugmentationRegistry::standard(&self.augment).select(&self.augmentations)
    }
}
