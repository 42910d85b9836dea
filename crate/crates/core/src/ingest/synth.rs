//! Class-conditional synthetic cohorts.
//!
//! HC subjects carry only broadband sensor noise. PD subjects carry a 4–6 Hz
//! tremor that is at least 4× stronger on one wrist. DD subjects carry a
//! faster, near-symmetric tremor. All accelerometer axes also see a constant
//! gravity vector, which the band-pass removes.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Cohort, Group, RawRecording, Task, RAW_RATE_HZ};
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::signal::Signal;
use crate::CHANNELS;

const GRAVITY: f64 = 9.81;

/// Narrow-band high-frequency interference added on top of the clean signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactConfig {
    pub band_hz: [f64; 2],
    pub amplitude: f64,
}

impl Default for ArtifactConfig {
    fn default() -> Self {
        Self { band_hz: [28.0, 31.0], amplitude: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_per_class: usize,
    pub duration_s: f64,
    pub seed: u64,
    /// Dominant-wrist tremor amplitude.
    pub tremor_amplitude: f64,
    /// Noise standard deviation as a fraction of the tremor amplitude.
    pub noise_fraction: f64,
    pub pd_band_hz: [f64; 2],
    pub dd_band_hz: [f64; 2],
    /// Weak-wrist / strong-wrist tremor amplitude range for PD.
    pub pd_weak_ratio: [f64; 2],
    /// Per-wrist amplitude jitter range for DD.
    pub dd_wrist_ratio: [f64; 2],
    /// Per-subject Gaussian perturbation of the shared tremor axis.
    pub direction_jitter: f64,
    pub artifacts: Option<ArtifactConfig>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_per_class: 10,
            duration_s: 10.0,
            seed: 42,
            tremor_amplitude: 1.0,
            noise_fraction: 0.1,
            pd_band_hz: [4.2, 5.8],
            dd_band_hz: [6.5, 8.5],
            pd_weak_ratio: [0.1, 0.25],
            dd_wrist_ratio: [0.9, 1.1],
            direction_jitter: 0.2,
            artifacts: None,
        }
    }
}

/// Generates `n_per_class` subjects per group, each performing all ten tasks.
pub fn synth_cohort(n_per_class: usize, duration_s: f64, seed: u64) -> Result<Cohort> {
    synth_cohort_with(&SynthConfig { n_per_class, duration_s, seed, ..SynthConfig::default() })
}

pub fn synth_cohort_with(cfg: &SynthConfig) -> Result<Cohort> {
    if cfg.n_per_class == 0 {
        return Err(Error::InvalidArgument("n_per_class must be at least 1".into()));
    }
    if !(10.0..=20.0).contains(&cfg.duration_s) {
        return Err(Error::InvalidArgument(format!(
            "duration_s must lie in [10, 20], got {}",
            cfg.duration_s
        )));
    }
    let rows = (cfg.duration_s * RAW_RATE_HZ).round() as usize;
    let mut cohort = Cohort::default();
    for group in Group::ALL {
        for i in 0..cfg.n_per_class {
            let subject_id = format!("{}{:03}", group.as_str(), i + 1);
            let profile = SubjectProfile::draw(cfg, group, i as u64);
            for task in Task::ALL {
                let mut rng = rng_for(cfg.seed, &[group.index() as u64, i as u64, 100 + task.index() as u64]);
                let left = profile.render(cfg, Side::Left, rows, &mut rng);
                let right = profile.render(cfg, Side::Right, rows, &mut rng);
                cohort.recordings.push(RawRecording {
                    subject_id: subject_id.clone(),
                    group,
                    task,
                    sample_rate_hz: RAW_RATE_HZ,
                    left,
                    right,
                });
            }
            cohort.subjects.insert(subject_id, group);
        }
    }
    cohort.sort_canonical();
    Ok(cohort)
}

#[derive(Clone, Copy)]
enum Side {
    Left,
    Right,
}

struct WristProfile {
    tremor_amp: f64,
    direction: [f64; CHANNELS],
    gravity: [f64; 3],
}

struct SubjectProfile {
    tremor_hz: f64,
    left: WristProfile,
    right: WristProfile,
}

/// Rest tremor is mostly forearm rotation: large roll rate plus lateral
/// acceleration. Channel order is `ax ay az gx gy gz`.
const TREMOR_AXIS: [f64; CHANNELS] = [0.35, 0.25, 0.1, 0.8, 0.3, 0.2];

fn tremor_direction(jitter: f64, rng: &mut impl Rng) -> [f64; CHANNELS] {
    let mut v = TREMOR_AXIS;
    for x in &mut v {
        let e: f64 = StandardNormal.sample(rng);
        *x += jitter * e;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.map(|x| x / norm)
}

fn unit_vector<const N: usize>(rng: &mut impl Rng) -> [f64; N] {
    let mut v = [0.0; N];
    for x in &mut v {
        *x = StandardNormal.sample(rng);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.map(|x| x / norm)
}

impl SubjectProfile {
    fn draw(cfg: &SynthConfig, group: Group, index: u64) -> Self {
        let mut rng = rng_for(cfg.seed, &[group.index() as u64, index]);
        let a = cfg.tremor_amplitude;
        let (tremor_hz, amp_l, amp_r) = match group {
            Group::Hc => (0.0, 0.0, 0.0),
            Group::Pd => {
                let f = rng.random_range(cfg.pd_band_hz[0]..cfg.pd_band_hz[1]);
                let weak = a * rng.random_range(cfg.pd_weak_ratio[0]..cfg.pd_weak_ratio[1]);
                if rng.random_bool(0.5) {
                    (f, a, weak)
                } else {
                    (f, weak, a)
                }
            }
            Group::Dd => {
                let f = rng.random_range(cfg.dd_band_hz[0]..cfg.dd_band_hz[1]);
                let l = a * rng.random_range(cfg.dd_wrist_ratio[0]..cfg.dd_wrist_ratio[1]);
                let r = a * rng.random_range(cfg.dd_wrist_ratio[0]..cfg.dd_wrist_ratio[1]);
                (f, l, r)
            }
        };
        let mut wrist = |amp: f64| WristProfile {
            tremor_amp: amp,
            direction: tremor_direction(cfg.direction_jitter, &mut rng),
            gravity: unit_vector::<3>(&mut rng).map(|g| g * GRAVITY),
        };
        let left = wrist(amp_l);
        let right = wrist(amp_r);
        Self { tremor_hz, left, right }
    }

    fn render(&self, cfg: &SynthConfig, side: Side, rows: usize, rng: &mut impl Rng) -> Signal {
        let wrist = match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        };
        let noise = Normal::new(0.0, cfg.noise_fraction * cfg.tremor_amplitude)
            .expect("noise sigma is finite and non-negative");
        // Small per-task drift of the tremor frequency.
        let f = self.tremor_hz * rng.random_range(0.98..1.02);
        let phase = rng.random_range(0.0..2.0 * PI);
        let artifact = cfg.artifacts.as_ref().map(|art| {
            let f = rng.random_range(art.band_hz[0]..art.band_hz[1]);
            let phases: [f64; CHANNELS] = std::array::from_fn(|_| rng.random_range(0.0..2.0 * PI));
            (f, art.amplitude, phases)
        });

        let mut data = Vec::with_capacity(rows * CHANNELS);
        for t in 0..rows {
            let time = t as f64 / RAW_RATE_HZ;
            let tremor = wrist.tremor_amp * (2.0 * PI * f * time + phase).sin();
            for c in 0..CHANNELS {
                let mut v = tremor * wrist.direction[c] + noise.sample(rng);
                if c < 3 {
                    v += wrist.gravity[c];
                }
                if let Some((fa, amp, phases)) = &artifact {
                    v += amp * (2.0 * PI * fa * time + phases[c]).sin();
                }
                data.push(v);
            }
        }
        Signal::new(rows, CHANNELS, data).expect("rows * CHANNELS values")
    }
}
