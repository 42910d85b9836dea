//! View augmentations on bilateral `[256 x 12]` windows.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub jitter_sigma: f64,
    /// Interior spline knots of the time warp.
    pub warp_knots: usize,
    /// Standard deviation of the knot speed multipliers around 1.
    pub warp_sigma: f64,
    pub warp_clamp: [f64; 2],
    /// Probability of picking the first registered augmentation.
    pub choice_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { jitter_sigma: 0.05, warp_knots: 4, warp_sigma: 0.3, warp_clamp: [0.25, 1.75], choice_prob: 0.5 }
    }
}

/// One way of producing a positive view. `x` is row-major `[len x channels]`.
pub trait Augmentation: Send + Sync {
    fn name(&self) -> &'static str;
    fn apply(&self, x: &[f32], channels: usize, rng: &mut ChaCha8Rng) -> Vec<f32>;
}

/// Additive i.i.d. Gaussian noise.
#[derive(Debug, Clone, Copy)]
pub struct Jitter {
    pub sigma: f64,
}

impl Augmentation for Jitter {
    fn name(&self) -> &'static str {
        "jitter"
    }

    fn apply(&self, x: &[f32], _channels: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
        if self.sigma == 0.0 {
            return x.to_vec();
        }
        let normal = Normal::new(0.0, self.sigma).expect("finite sigma");
        x.iter().map(|&v| (f64::from(v) + normal.sample(rng)) as f32).collect()
    }
}

/// Smooth time warp: a natural cubic spline through random speed multipliers
/// (unit speed at both ends) is integrated into a monotone time axis, and
/// every channel is linearly resampled on it.
#[derive(Debug, Clone, Copy)]
pub struct TimeWarp {
    pub knots: usize,
    pub sigma: f64,
    pub clamp: [f64; 2],
}

impl TimeWarp {
    /// Interior speed multipliers for one draw.
    pub fn draw_speeds(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let normal = Normal::new(1.0, self.sigma).expect("finite sigma");
        (0..self.knots).map(|_| normal.sample(rng).clamp(self.clamp[0], self.clamp[1])).collect()
    }

    /// Warped sample positions in `[0, len - 1]` for the given interior
    /// speeds; strictly increasing, first 0 and last exactly `len - 1`.
    pub fn warp_positions(&self, speeds: &[f64], len: usize) -> Vec<f64> {
        let last = (len - 1) as f64;
        let n_knots = speeds.len() + 2;
        let kx: Vec<f64> = (0..n_knots).map(|k| last * k as f64 / (n_knots - 1) as f64).collect();
        let mut ky = Vec::with_capacity(n_knots);
        ky.push(1.0);
        ky.extend_from_slice(speeds);
        ky.push(1.0);
        let spline = NaturalSpline::new(&kx, &ky);
        let speed: Vec<f64> = (0..len).map(|t| spline.eval(t as f64).max(self.clamp[0])).collect();
        let mut cum = vec![0.0; len];
        for t in 1..len {
            cum[t] = cum[t - 1] + 0.5 * (speed[t - 1] + speed[t]);
        }
        let total = cum[len - 1];
        let mut pos: Vec<f64> = cum.iter().map(|c| last * c / total).collect();
        pos[len - 1] = last;
        pos
    }

    pub fn apply_with_speeds(&self, x: &[f32], channels: usize, speeds: &[f64]) -> Vec<f32> {
        let len = x.len() / channels;
        let pos = self.warp_positions(speeds, len);
        let mut out = vec![0.0f32; x.len()];
        for (t, &p) in pos.iter().enumerate() {
            let i0 = (p.floor() as usize).min(len - 1);
            let i1 = (i0 + 1).min(len - 1);
            let frac = p - i0 as f64;
            for c in 0..channels {
                let a = f64::from(x[i0 * channels + c]);
                let b = f64::from(x[i1 * channels + c]);
                out[t * channels + c] = (a + frac * (b - a)) as f32;
            }
        }
        out
    }
}

impl Augmentation for TimeWarp {
    fn name(&self) -> &'static str {
        "time_warp"
    }

    fn apply(&self, x: &[f32], channels: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
        let speeds = self.draw_speeds(rng);
        self.apply_with_speeds(x, channels, &speeds)
    }
}

/// Natural cubic spline through `(x_i, y_i)` with increasing `x`.
struct NaturalSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl NaturalSpline {
    fn new(x: &[f64], y: &[f64]) -> Self {
        let n = x.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for the interior second derivatives.
            let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            let mut upper = vec![0.0; k];
            for i in 0..k {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                upper[i] = h[i + 1];
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
            }
            for i in 1..k {
                let w = h[i] / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Self { x: x.to_vec(), y: y.to_vec(), m }
    }

    fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let mut i = 0;
        while i + 2 < n && t > self.x[i + 1] {
            i += 1;
        }
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

/// Augmentations registered by name, in draw order.
pub struct AugmentationRegistry {
    entries: Vec<Box<dyn Augmentation>>,
}

impl AugmentationRegistry {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    /// `time_warp` and `jitter` configured from `cfg`.
    pub fn standard(cfg: &AugmentConfig) -> Self {
        let mut r = Self::empty();
        r.register(Box::new(TimeWarp { knots: cfg.warp_knots, sigma: cfg.warp_sigma, clamp: cfg.warp_clamp }));
        r.register(Box::new(Jitter { sigma: cfg.jitter_sigma }));
        r
    }

    pub fn register(&mut self, aug: Box<dyn Augmentation>) {
        self.entries.retain(|a| a.name() != aug.name());
        self.entries.push(aug);
    }

    pub fn get(&self, name: &str) -> Option<&dyn Augmentation> {
        self.entries.iter().find(|a| a.name() == name).map(|a| a.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|a| a.name()).collect()
    }

    /// Keeps only `names`, in that order.
    pub fn select(mut self, names: &[String]) -> Result<Self> {
        let mut out = Vec::with_capacity(names.len());
        for n in names {
            let idx = self
                .entries
                .iter()
                .position(|a| a.name() == n)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown augmentation {n}")))?;
            out.push(self.entries.remove(idx));
        }
        if out.is_empty() {
            return Err(Error::InvalidArgument("at least one augmentation is required".into()));
        }
        Ok(Self { entries: out })
    }

    /// Picks one augmentation: the first with probability `choice_prob`,
    /// otherwise uniformly among the rest.
    pub fn choose(&self, choice_prob: f64, rng: &mut ChaCha8Rng) -> &dyn Augmentation {
        let n = self.entries.len();
        if n == 1 || rng.random_bool(choice_prob.clamp(0.0, 1.0)) {
            self.entries[0].as_ref()
        } else {
            self.entries[1 + rng.random_range(0..n - 1)].as_ref()
        }
    }
}

/// An anchor and its positive view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPair {
    /// The clean window.
    pub anchor: Vec<f32>,
    pub positive: Vec<f32>,
    pub augmentation: &'static str,
}

/// Tag for per-sample augmentation seeds.
pub(crate) const TAG_AUGMENT: u64 = 0xA06;

/// Builds `(anchor, positive)` pairs. Sample `i` draws from its own seed
/// `hash(seed, i)`, so pairs do not depend on batch composition or threads.
pub fn make_batch_pairs(
    windows: &[&[f32]],
    channels: usize,
    registry: &AugmentationRegistry,
    choice_prob: f64,
    seed: u64,
    indices: &[u64],
) -> Vec<ViewPair> {
    windows
        .iter()
        .zip(indices)
        .map(|(w, &i)| {
            let mut rng = rng_for(seed, &[TAG_AUGMENT, i]);
            let aug = registry.choose(choice_prob, &mut rng);
            ViewPair { anchor: w.to_vec(), positive: aug.apply(w, channels, &mut rng), augmentation: aug.name() }
        })
        .collect()
}
