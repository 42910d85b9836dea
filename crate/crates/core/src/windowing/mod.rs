//! Fixed-length bilateral windows with class-dependent hops (DHWT),
//! hierarchical masked labels and patient-level stratified folds.

mod cache;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, SosFilter};
use crate::error::{Error, Result};
use crate::ingest::{Cohort, Group, RawRecording, Task};
use crate::rng::rng_for;
use crate::signal::Signal;
use crate::{CHANNELS, WINDOW_LEN};

pub use cache::{WindowCache, CACHE_DATA_FILE, CACHE_MANIFEST_FILE};

/// Target of one binary head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HeadTarget {
    Zero,
    One,
    Mask,
}

impl HeadTarget {
    /// Class index, or `None` when masked.
    pub fn class(self) -> Option<usize> {
        match self {
            HeadTarget::Zero => Some(0),
            HeadTarget::One => Some(1),
            HeadTarget::Mask => None,
        }
    }

    /// Integer code with `-1` for masked entries.
    pub fn code(self) -> i8 {
        match self {
            HeadTarget::Zero => 0,
            HeadTarget::One => 1,
            HeadTarget::Mask => -1,
        }
    }

    pub fn from_code(code: i8) -> Result<Self> {
        match code {
            0 => Ok(HeadTarget::Zero),
            1 => Ok(HeadTarget::One),
            -1 => Ok(HeadTarget::Mask),
            other => Err(Error::MalformedDataset(format!("invalid label code {other}"))),
        }
    }
}

/// Labels of the HC-vs-PD and PD-vs-DD heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HierLabel {
    pub hc_pd: HeadTarget,
    pub pd_dd: HeadTarget,
}

impl HierLabel {
    pub fn heads(self) -> [HeadTarget; 2] {
        [self.hc_pd, self.pd_dd]
    }

    /// Inverse of [`encode_label`] for the three legal patterns.
    pub fn group(self) -> Option<Group> {
        use HeadTarget::*;
        match (self.hc_pd, self.pd_dd) {
            (Zero, Mask) => Some(Group::Hc),
            (One, Zero) => Some(Group::Pd),
            (Mask, One) => Some(Group::Dd),
            _ => None,
        }
    }
}

/// HC → (0, MASK), PD → (1, 0), DD → (MASK, 1).
pub fn encode_label(group: Group) -> HierLabel {
    use HeadTarget::*;
    match group {
        Group::Hc => HierLabel { hc_pd: Zero, pd_dd: Mask },
        Group::Pd => HierLabel { hc_pd: One, pd_dd: Zero },
        Group::Dd => HierLabel { hc_pd: Mask, pd_dd: One },
    }
}

/// One model input: 256 synchronous samples from each wrist.
#[derive(Debug, Clone, PartialEq)]
pub struct BilateralWindow {
    /// `[WINDOW_LEN x CHANNELS]`, row-major.
    pub left: Vec<f32>,
    /// `[WINDOW_LEN x CHANNELS]`, row-major.
    pub right: Vec<f32>,
    pub subject_id: String,
    pub group: Group,
    pub task: Task,
    /// Start row in the preprocessed 64 Hz recording.
    pub offset: usize,
}

impl BilateralWindow {
    pub fn validate(&self) -> Result<()> {
        let want = WINDOW_LEN * CHANNELS;
        if self.left.len() != want || self.right.len() != want {
            return Err(Error::Shape(format!(
                "window has {} / {} values per wrist, expected {want}",
                self.left.len(),
                self.right.len()
            )));
        }
        if self.left.iter().chain(&self.right).any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite value in window {}/{}@{}",
                self.subject_id, self.task, self.offset
            )));
        }
        Ok(())
    }

    /// Interleaved `[WINDOW_LEN x 12]` view: left channels then right.
    pub fn bilateral_rows(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(2 * self.left.len());
        for (l, r) in self.left.chunks(CHANNELS).zip(self.right.chunks(CHANNELS)) {
            out.extend_from_slice(l);
            out.extend_from_slice(r);
        }
        out
    }

    /// Inverse of [`bilateral_rows`](Self::bilateral_rows); metadata is copied from `like`.
    pub fn from_bilateral_rows(rows: &[f32], like: &BilateralWindow) -> BilateralWindow {
        let mut left = Vec::with_capacity(rows.len() / 2);
        let mut right = Vec::with_capacity(rows.len() / 2);
        for row in rows.chunks(2 * CHANNELS) {
            left.extend_from_slice(&row[..CHANNELS]);
            right.extend_from_slice(&row[CHANNELS..]);
        }
        BilateralWindow { left, right, ..like.clone() }
    }
}

/// Windows with their (possibly re-labelled) targets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowSet {
    pub windows: Vec<BilateralWindow>,
    pub labels: Vec<HierLabel>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn push(&mut self, w: BilateralWindow, label: HierLabel) {
        self.windows.push(w);
        self.labels.push(label);
    }

    pub fn subjects(&self) -> BTreeSet<&str> {
        self.windows.iter().map(|w| w.subject_id.as_str()).collect()
    }

    /// Window counts per group.
    pub fn group_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for w in &self.windows {
            c[w.group.index()] += 1;
        }
        c
    }

    /// Keeps windows whose subject is in `keep`.
    pub fn filter_subjects(&self, keep: &BTreeSet<String>) -> WindowSet {
        let mut out = WindowSet::default();
        for (w, l) in self.windows.iter().zip(&self.labels) {
            if keep.contains(&w.subject_id) {
                out.push(w.clone(), *l);
            }
        }
        out
    }
}

/// Overlap per class, in percent of the window length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OverlapPct {
    #[serde(rename = "HC")]
    pub hc: u32,
    #[serde(rename = "PD")]
    pub pd: u32,
    #[serde(rename = "DD")]
    pub dd: u32,
}

impl Default for OverlapPct {
    fn default() -> Self {
        Self { hc: 70, pd: 0, dd: 65 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowingConfig {
    pub window_len: usize,
    pub overlap_pct: OverlapPct,
    pub folds: usize,
    pub fold_seed: u64,
}

impl Default for WindowingConfig {
    fn default() -> Self {
        Self { window_len: WINDOW_LEN, overlap_pct: OverlapPct::default(), folds: 5, fold_seed: 42 }
    }
}

impl WindowingConfig {
    /// Same hop for every class (plain non-overlapping windows).
    pub fn uniform() -> Self {
        Self { overlap_pct: OverlapPct { hc: 0, pd: 0, dd: 0 }, ..Self::default() }
    }

    /// `floor(window_len * (1 - overlap))`: 76 / 256 / 89 by default.
    pub fn hop(&self, group: Group) -> usize {
        let pct = match group {
            Group::Hc => self.overlap_pct.hc,
            Group::Pd => self.overlap_pct.pd,
            Group::Dd => self.overlap_pct.dd,
        } as usize;
        (self.window_len * (100 - pct.min(99)) / 100).max(1)
    }
}

/// Window start offsets: `0, hop, 2 hop, ...` with the trailing partial
/// window dropped.
pub fn window_offsets(n: usize, window_len: usize, hop: usize) -> Vec<usize> {
    if n < window_len {
        return Vec::new();
    }
    (0..=(n - window_len) / hop).map(|k| k * hop).collect()
}

/// Cuts a preprocessed recording into class-dependent overlapping windows.
pub fn dhwt_segment(rec: &RawRecording, cfg: &WindowingConfig) -> Result<Vec<BilateralWindow>> {
    let n = rec.rows();
    if n < cfg.window_len {
        return Err(Error::SignalTooShort { len: n, min: cfg.window_len });
    }
    let to_f32 = |s: &Signal, start: usize| -> Vec<f32> {
        s.data()[start * CHANNELS..(start + cfg.window_len) * CHANNELS]
            .iter()
            .map(|&v| v as f32)
            .collect()
    };
    window_offsets(n, cfg.window_len, cfg.hop(rec.group))
        .into_iter()
        .map(|offset| {
            let w = BilateralWindow {
                left: to_f32(&rec.left, offset),
                right: to_f32(&rec.right, offset),
                subject_id: rec.subject_id.clone(),
                group: rec.group,
                task: rec.task,
                offset,
            };
            if cfg.window_len == WINDOW_LEN {
                w.validate()?;
            }
            Ok(w)
        })
        .collect()
}

/// Trim → resample to 64 Hz → optional zero-phase band-pass.
pub fn preprocess_recording(
    rec: &RawRecording,
    bandpass: Option<&SosFilter>,
) -> Result<RawRecording> {
    let trimmed = dsp::trim_transient(rec)?;
    let both = trimmed.left.hstack(&trimmed.right)?;
    let mut resampled = dsp::resample_100_to_64(&both)?;
    if let Some(f) = bandpass {
        resampled = dsp::filtfilt(f, &resampled)?;
    }
    let (left, right) = resampled.split_cols(CHANNELS);
    Ok(RawRecording { left, right, sample_rate_hz: dsp::TARGET_RATE_HZ, ..trimmed })
}

/// Subject → fold assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldSpec {
    pub fn fold_of(&self, subject: &str) -> Option<usize> {
        self.assignment.get(subject).copied()
    }

    pub fn subjects_in(&self, fold: usize) -> BTreeSet<String> {
        self.assignment.iter().filter(|(_, f)| **f == fold).map(|(s, _)| s.clone()).collect()
    }

    /// `[fold][group]` subject counts.
    pub fn fold_group_counts(&self, subjects: &BTreeMap<String, Group>) -> Vec<[usize; 3]> {
        let mut counts = vec![[0; 3]; self.k];
        for (s, f) in &self.assignment {
            if let Some(g) = subjects.get(s) {
                counts[*f][g.index()] += 1;
            }
        }
        counts
    }
}

/// Seeded per-group shuffle followed by a round-robin deal into `k` folds.
/// The deal position carries over between groups so fold totals stay level.
pub fn stratified_patient_folds(cohort: &Cohort, k: usize, seed: u64) -> Result<FoldSpec> {
    stratify_subjects(&cohort.subjects, k, seed)
}

pub fn stratify_subjects(subjects: &BTreeMap<String, Group>, k: usize, seed: u64) -> Result<FoldSpec> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    let mut assignment = BTreeMap::new();
    let mut next = 0usize;
    for group in Group::ALL {
        let mut ids: Vec<&String> =
            subjects.iter().filter(|(_, g)| **g == group).map(|(s, _)| s).collect();
        if ids.len() < k {
            return Err(Error::InsufficientSubjects {
                group: group.to_string(),
                have: ids.len(),
                need: k,
            });
        }
        let mut rng = rng_for(seed, &[0xF01D, group.index() as u64]);
        ids.shuffle(&mut rng);
        for id in ids {
            assignment.insert(id.clone(), next);
            next = (next + 1) % k;
        }
    }
    Ok(FoldSpec { k, assignment })
}

/// Train / validation windows for one fold.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub train: WindowSet,
    pub val: WindowSet,
}

/// Preprocesses and windows a whole cohort. Recordings that end up shorter
/// than one window are skipped with a warning.
pub fn window_cohort(
    cohort: &Cohort,
    bandpass: bool,
    cfg: &WindowingConfig,
) -> Result<WindowSet> {
    let filter = bandpass.then(dsp::design_bandpass);
    window_cohort_with(cohort, filter.as_ref(), cfg)
}

/// [`window_cohort`] with an explicit band-pass design (`None` skips it).
pub fn window_cohort_with(
    cohort: &Cohort,
    filter: Option<&SosFilter>,
    cfg: &WindowingConfig,
) -> Result<WindowSet> {
    use rayon::prelude::*;
    let per_rec: Vec<Vec<BilateralWindow>> = cohort
        .recordings
        .par_iter()
        .map(|rec| {
            let prepared = preprocess_recording(rec, filter)?;
            match dhwt_segment(&prepared, cfg) {
                Ok(w) => Ok(w),
                Err(Error::SignalTooShort { len, .. }) => {
                    log::warn!(
                        "skipping {}/{}: {len} samples after resampling",
                        rec.subject_id,
                        rec.task
                    );
                    Ok(Vec::new())
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let mut windows: Vec<BilateralWindow> = per_rec.into_iter().flatten().collect();
    windows.sort_by(|a, b| {
        (a.subject_id.as_str(), a.task, a.offset).cmp(&(b.subject_id.as_str(), b.task, b.offset))
    });
    let labels = windows.iter().map(|w| encode_label(w.group)).collect();
    Ok(WindowSet { windows, labels })
}

/// Full preprocessing for one fold: validation = subjects in `fold_idx`.
pub fn build_dataset(
    cohort: &Cohort,
    folds: &FoldSpec,
    fold_idx: usize,
    bandpass: bool,
    cfg: &WindowingConfig,
) -> Result<Dataset> {
    if fold_idx >= folds.k {
        return Err(Error::InvalidArgument(format!("fold {fold_idx} out of range 0..{}", folds.k)));
    }
    let all = window_cohort(cohort, bandpass, cfg)?;
    split_by_fold(&all, folds, fold_idx)
}

pub fn split_by_fold(all: &WindowSet, folds: &FoldSpec, fold_idx: usize) -> Result<Dataset> {
    let mut ds = Dataset::default();
    for (w, l) in all.windows.iter().zip(&all.labels) {
        let f = folds.fold_of(&w.subject_id).ok_or_else(|| {
            Error::MalformedDataset(format!("subject {} has no fold", w.subject_id))
        })?;
        if f == fold_idx {
            ds.val.push(w.clone(), *l);
        } else {
            ds.train.push(w.clone(), *l);
        }
    }
    Ok(ds)
}
