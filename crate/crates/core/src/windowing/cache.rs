//! On-disk window cache: raw little-endian `f32` tensor `[N, 256, 12]` plus a
//! JSON manifest carrying labels, subjects, folds and pipeline flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    split_by_fold, window_cohort_with, Dataset, FoldSpec, HeadTarget, HierLabel, WindowSet,
    WindowingConfig,
};
use crate::dsp::SosFilter;
use crate::error::{Error, Result};
use crate::ingest::{Cohort, Group, Task};
use crate::{BILATERAL_CHANNELS, CHANNELS};

pub const CACHE_DATA_FILE: &str = "windows.bin";
pub const CACHE_MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "pdwrist-windows/1";

/// Every window of a cohort together with its fold id.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowCache {
    pub set: WindowSet,
    pub folds: FoldSpec,
    pub subjects: BTreeMap<String, Group>,
    pub bandpass: bool,
    pub windowing: WindowingConfig,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    dtype: String,
    shape: [usize; 3],
    pipeline: PipelineFlags,
    windowing: WindowingConfig,
    subjects: BTreeMap<String, Group>,
    folds: FoldSpec,
    windows: Vec<WindowMeta>,
}

#[derive(Serialize, Deserialize)]
struct PipelineFlags {
    trim_samples: usize,
    rate_hz: f64,
    bandpass: bool,
}

#[derive(Serialize, Deserialize)]
struct WindowMeta {
    subject_id: String,
    group: Group,
    task: Task,
    offset: usize,
    fold: usize,
    labels: [i8; 2],
}

impl WindowCache {
    pub fn build(
        cohort: &Cohort,
        bandpass: bool,
        windowing: &WindowingConfig,
    ) -> Result<WindowCache> {
        let filter = bandpass.then(crate::dsp::design_bandpass);
        Self::build_with(cohort, filter.as_ref(), windowing)
    }

    /// Builds with an explicit band-pass design; `None` disables filtering.
    pub fn build_with(
        cohort: &Cohort,
        filter: Option<&SosFilter>,
        windowing: &WindowingConfig,
    ) -> Result<WindowCache> {
        let folds =
            super::stratified_patient_folds(cohort, windowing.folds, windowing.fold_seed)?;
        let set = window_cohort_with(cohort, filter, windowing)?;
        Ok(WindowCache {
            set,
            folds,
            subjects: cohort.subjects.clone(),
            bandpass: filter.is_some(),
            windowing: windowing.clone(),
        })
    }

    pub fn split(&self, fold: usize) -> Result<Dataset> {
        if fold >= self.folds.k {
            return Err(Error::InvalidArgument(format!(
                "fold {fold} out of range 0..{}",
                self.folds.k
            )));
        }
        split_by_fold(&self.set, &self.folds, fold)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let len = self.windowing.window_len;
        let mut bytes = Vec::with_capacity(self.set.len() * len * BILATERAL_CHANNELS * 4);
        let mut metas = Vec::with_capacity(self.set.len());
        for (w, l) in self.set.windows.iter().zip(&self.set.labels) {
            for v in w.bilateral_rows() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            metas.push(WindowMeta {
                subject_id: w.subject_id.clone(),
                group: w.group,
                task: w.task,
                offset: w.offset,
                fold: self.folds.fold_of(&w.subject_id).unwrap_or(usize::MAX),
                labels: [l.hc_pd.code(), l.pd_dd.code()],
            });
        }
        let manifest = Manifest {
            format: FORMAT.into(),
            dtype: "f32".into(),
            shape: [self.set.len(), len, BILATERAL_CHANNELS],
            pipeline: PipelineFlags {
                trim_samples: crate::dsp::TRIM_SAMPLES,
                rate_hz: crate::dsp::TARGET_RATE_HZ,
                bandpass: self.bandpass,
            },
            windowing: self.windowing.clone(),
            subjects: self.subjects.clone(),
            folds: self.folds.clone(),
            windows: metas,
        };
        fs::write(dir.join(CACHE_DATA_FILE), bytes)?;
        fs::write(dir.join(CACHE_MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<WindowCache> {
        let manifest_path = dir.join(CACHE_MANIFEST_FILE);
        let manifest: Manifest = serde_json::from_slice(&fs::read(&manifest_path)?)
            .map_err(|e| Error::MalformedDataset(format!("{}: {e}", manifest_path.display())))?;
        if manifest.format != FORMAT || manifest.dtype != "f32" {
            return Err(Error::MalformedDataset(format!(
                "unsupported cache format {} / {}",
                manifest.format, manifest.dtype
            )));
        }
        let [n, len, ch] = manifest.shape;
        if ch != BILATERAL_CHANNELS || manifest.windows.len() != n {
            return Err(Error::MalformedDataset("cache manifest shape mismatch".into()));
        }
        let bytes = fs::read(dir.join(CACHE_DATA_FILE))?;
        let per = len * ch;
        if bytes.len() != n * per * 4 {
            return Err(Error::MalformedDataset(format!(
                "cache payload has {} bytes, expected {}",
                bytes.len(),
                n * per * 4
            )));
        }
        let mut set = WindowSet::default();
        for (i, meta) in manifest.windows.into_iter().enumerate() {
            let chunk = &bytes[i * per * 4..(i + 1) * per * 4];
            let mut left = Vec::with_capacity(len * CHANNELS);
            let mut right = Vec::with_capacity(len * CHANNELS);
            for (j, b) in chunk.chunks_exact(4).enumerate() {
                let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
                if j % ch < CHANNELS {
                    left.push(v);
                } else {
                    right.push(v);
                }
            }
            let label = HierLabel {
                hc_pd: HeadTarget::from_code(meta.labels[0])?,
                pd_dd: HeadTarget::from_code(meta.labels[1])?,
            };
            set.push(
                super::BilateralWindow {
                    left,
                    right,
                    subject_id: meta.subject_id,
                    group: meta.group,
                    task: meta.task,
                    offset: meta.offset,
                },
                label,
            );
        }
        Ok(WindowCache {
            set,
            folds: manifest.folds,
            subjects: manifest.subjects,
            bandpass: manifest.pipeline.bandpass,
            windowing: manifest.windowing,
        })
    }
}
