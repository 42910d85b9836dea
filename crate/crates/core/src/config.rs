//! JSON run configuration shared by every CLI command.
//!
//! Every field is optional; omitted fields take the documented defaults.
//! Unknown keys are rejected, all of them at once.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dsp::BandpassDesign;
use crate::error::{Error, Result};
use crate::ingest::SynthConfig;
use crate::model::ModelConfig;
use crate::ssl::SslConfig;
use crate::stream::StreamConfig;
use crate::train::TrainConfig;
use crate::windowing::WindowingConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DspConfig {
    /// Zero-phase band-pass before windowing.
    pub bandpass: bool,
    pub filter: BandpassDesign,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self { bandpass: true, filter: BandpassDesign::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub dsp: DspConfig,
    pub windowing: WindowingConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub ssl: SslConfig,
    pub stream: StreamConfig,
}

impl RunConfig {
    /// Parses a user document, listing every unknown key in one error.
    pub fn from_json(text: &str) -> Result<Self> {
        let user: Value = serde_json::from_str(text)?;
        let defaults = serde_json::to_value(RunConfig::default())?;
        let mut unknown = Vec::new();
        unknown_keys(&user, &defaults, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(Error::Config(unknown.into_iter().map(|k| format!("unknown key {k}")).collect()));
        }
        let cfg: RunConfig = serde_json::from_value(user).map_err(|e| Error::Config(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let checks = [
            ("model", self.model.validate()),
            ("train", self.train.validate()),
            ("ssl", self.ssl.validate()),
        ];
        for (section, r) in checks {
            if let Err(e) = r {
                problems.push(format!("{section}: {e}"));
            }
        }
        if self.windowing.folds < 2 {
            problems.push("windowing.folds must be at least 2".into());
        }
        if self.windowing.window_len != self.model.window_len {
            problems.push(format!(
                "windowing.window_len {} differs from model.window_len {}",
                self.windowing.window_len, self.model.window_len
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// The effective configuration, pretty-printed.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

/// Collects dotted paths present in `user` but absent from `reference`.
/// A `null` reference (an optional section) accepts any content; serde
/// checks it afterwards.
fn unknown_keys(user: &Value, reference: &Value, prefix: &str, out: &mut Vec<String>) {
    let (Value::Object(u), Value::Object(r)) = (user, reference) else {
        return;
    };
    for (k, v) in u {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match r.get(k) {
            None => out.push(path),
            Some(rv) => unknown_keys(v, rv, &path, out),
        }
    }
}
