//! Raw recordings: the PADS-layout loader and the synthetic cohort generator.

mod pads;
mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Signal;
use crate::CHANNELS;

pub use pads::{load_pads, save_cohort, CSV_HEADER};
pub use synth::{synth_cohort, synth_cohort_with, ArtifactConfig, SynthConfig};

/// Sampling rate of the raw smartwatch streams.
pub const RAW_RATE_HZ: f64 = 100.0;

/// Diagnostic group of a participant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "HC")]
    Hc,
    #[serde(rename = "PD")]
    Pd,
    #[serde(rename = "DD")]
    Dd,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Hc, Group::Pd, Group::Dd];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Hc => "HC",
            Group::Pd => "PD",
            Group::Dd => "DD",
        }
    }

    /// Index in `ALL`, also the three-class target.
    pub fn index(self) -> usize {
        match self {
            Group::Hc => 0,
            Group::Pd => 1,
            Group::Dd => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Group> {
        Group::ALL.get(i).copied()
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "HC" => Ok(Group::Hc),
            "PD" => Ok(Group::Pd),
            "DD" => Ok(Group::Dd),
            other => Err(Error::InvalidArgument(format!("unknown group `{other}`"))),
        }
    }
}

/// The ten standardized motor tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    CrossArms,
    DrinkGlas,
    Entrainment,
    HoldWeight,
    LiftHold,
    PointFinger,
    Relaxed,
    StretchHold,
    TouchIndex,
    TouchNose,
}

impl Task {
    pub const ALL: [Task; 10] = [
        Task::CrossArms,
        Task::DrinkGlas,
        Task::Entrainment,
        Task::HoldWeight,
        Task::LiftHold,
        Task::PointFinger,
        Task::Relaxed,
        Task::StretchHold,
        Task::TouchIndex,
        Task::TouchNose,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::CrossArms => "CrossArms",
            Task::DrinkGlas => "DrinkGlas",
            Task::Entrainment => "Entrainment",
            Task::HoldWeight => "HoldWeight",
            Task::LiftHold => "LiftHold",
            Task::PointFinger => "PointFinger",
            Task::Relaxed => "Relaxed",
            Task::StretchHold => "StretchHold",
            Task::TouchIndex => "TouchIndex",
            Task::TouchNose => "TouchNose",
        }
    }

    pub fn index(self) -> usize {
        Task::ALL.iter().position(|&t| t == self).unwrap_or(0)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown task `{s}`")))
    }
}

/// One task performance: synchronous left and right wrist streams.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub subject_id: String,
    pub group: Group,
    pub task: Task,
    pub sample_rate_hz: f64,
    pub left: Signal,
    pub right: Signal,
}

impl RawRecording {
    /// Minimum raw length: the transient trim removes this many rows.
    pub const MIN_ROWS: usize = 50;

    pub fn rows(&self) -> usize {
        self.left.rows()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::MalformedDataset(format!(
                "{}/{}: non-positive sample rate",
                self.subject_id, self.task
            )));
        }
        if self.left.cols() != CHANNELS || self.right.cols() != CHANNELS {
            return Err(Error::MalformedDataset(format!(
                "{}/{}: expected {CHANNELS} channels per wrist, got {} and {}",
                self.subject_id,
                self.task,
                self.left.cols(),
                self.right.cols()
            )));
        }
        if self.left.rows() != self.right.rows() {
            return Err(Error::MalformedDataset(format!(
                "{}/{}: left has {} rows, right has {}",
                self.subject_id,
                self.task,
                self.left.rows(),
                self.right.rows()
            )));
        }
        if self.left.rows() < Self::MIN_ROWS {
            return Err(Error::RecordingTooShort { rows: self.left.rows(), min: Self::MIN_ROWS });
        }
        Ok(())
    }
}

/// All recordings of a study plus the subject → group table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cohort {
    pub recordings: Vec<RawRecording>,
    pub subjects: BTreeMap<String, Group>,
}

impl Cohort {
    /// Orders recordings by subject id, then task.
    pub fn sort_canonical(&mut self) {
        self.recordings
            .sort_by(|a, b| (a.subject_id.as_str(), a.task.index()).cmp(&(b.subject_id.as_str(), b.task.index())));
    }

    /// Number of subjects per group, in `Group::ALL` order.
    pub fn group_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for g in self.subjects.values() {
            counts[g.index()] += 1;
        }
        counts
    }

    pub fn subjects_in(&self, group: Group) -> Vec<&str> {
        self.subjects
            .iter()
            .filter(|(_, g)| **g == group)
            .map(|(s, _)| s.as_str())
            .collect()
    }

    /// Subjects lacking some of the ten tasks. Missing tasks are allowed.
    pub fn missing_tasks(&self) -> Vec<(String, Vec<Task>)> {
        let mut seen: BTreeMap<&str, Vec<Task>> = BTreeMap::new();
        for r in &self.recordings {
            seen.entry(r.subject_id.as_str()).or_default().push(r.task);
        }
        self.subjects
            .keys()
            .filter_map(|s| {
                let have = seen.get(s.as_str()).cloned().unwrap_or_default();
                let missing: Vec<Task> =
                    Task::ALL.iter().copied().filter(|t| !have.contains(t)).collect();
                (!missing.is_empty()).then(|| (s.clone(), missing))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.recordings {
            r.validate()?;
            match self.subjects.get(&r.subject_id) {
                Some(g) if *g == r.group => {}
                Some(g) => {
                    return Err(Error::MalformedDataset(format!(
                        "recording {}/{} has group {} but subject table says {g}",
                        r.subject_id, r.task, r.group
                    )))
                }
                None => {
                    return Err(Error::MalformedDataset(format!(
                        "recording for unknown subject {}",
                        r.subject_id
                    )))
                }
            }
        }
        Ok(())
    }
}
