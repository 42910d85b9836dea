use std::sync::Arc;

use crate::error::{Error, Result};
use crate::signal::Signal;

/// Upsampling factor of the 100 → 64 Hz conversion.
pub const RESAMPLE_UP: usize = 16;
/// Downsampling factor of the 100 → 64 Hz conversion.
pub const RESAMPLE_DOWN: usize = 25;
const HALF_TAPS: usize = RESAMPLE_UP * RESAMPLE_DOWN;
const KAISER_BETA: f64 = 5.0;

/// Windowed-sinc anti-aliasing filter shared by the batch and streaming
/// resamplers. Taps live at the upsampled rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyphaseKernel {
    taps: Arc<Vec<f64>>,
}

impl Default for PolyphaseKernel {
    fn default() -> Self {
        Self::new()
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

impl PolyphaseKernel {
    pub fn new() -> Self {
        let n = 2 * HALF_TAPS + 1;
        let cutoff = 1.0 / RESAMPLE_UP.max(RESAMPLE_DOWN) as f64; // fraction of Nyquist
        let i0_beta = bessel_i0(KAISER_BETA);
        let mut taps: Vec<f64> = (0..n)
            .map(|j| {
                let x = j as f64 - HALF_TAPS as f64;
                let arg = std::f64::consts::PI * cutoff * x;
                let sinc = if x == 0.0 { 1.0 } else { arg.sin() / arg };
                let r = x / HALF_TAPS as f64;
                let window = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
                cutoff * sinc * window
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        let scale = RESAMPLE_UP as f64 / sum;
        for t in &mut taps {
            *t *= scale;
        }
        Self { taps: Arc::new(taps) }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Range of input indices contributing to output `m` (unclipped).
    fn input_span(m: i64) -> (i64, i64) {
        let centre = m * RESAMPLE_DOWN as i64 + HALF_TAPS as i64;
        let up = RESAMPLE_UP as i64;
        let lo = -(-(centre - 2 * HALF_TAPS as i64)).div_euclid(up);
        let hi = centre.div_euclid(up);
        (lo, hi)
    }

    /// Output sample `m` from inputs `lo..=hi` (already clipped to what exists).
    #[inline]
    fn eval(&self, m: i64, lo: i64, hi: i64, fetch: impl Fn(i64) -> f64) -> f64 {
        let centre = m * RESAMPLE_DOWN as i64 + HALF_TAPS as i64;
        let mut acc = 0.0;
        for i in lo..=hi {
            let j = (centre - RESAMPLE_UP as i64 * i) as usize;
            acc += fetch(i) * self.taps[j];
        }
        acc
    }
}

/// Number of 64 Hz samples produced from `n` 100 Hz samples.
pub fn resampled_len(n: usize) -> usize {
    (n * RESAMPLE_UP).div_ceil(RESAMPLE_DOWN)
}

/// Polyphase 100 → 64 Hz conversion (up 16, down 25), zero-padded at both
/// ends, with no group delay.
pub fn resample_100_to_64(signal: &Signal) -> Result<Signal> {
    let n = signal.rows();
    if n < RESAMPLE_DOWN {
        return Err(Error::SignalTooShort { len: n, min: RESAMPLE_DOWN });
    }
    let kernel = PolyphaseKernel::new();
    let m_len = resampled_len(n);
    let columns: Vec<Vec<f64>> = signal
        .columns()
        .iter()
        .map(|x| {
            (0..m_len as i64)
                .map(|m| {
                    let (lo, hi) = PolyphaseKernel::input_span(m);
                    kernel.eval(m, lo.max(0), hi.min(n as i64 - 1), |i| x[i as usize])
                })
                .collect()
        })
        .collect();
    Signal::from_columns(&columns)
}

const HISTORY: usize = 64;

/// Incremental form of [`resample_100_to_64`].
///
/// Output `s` is emitted as soon as input `floor(25 s / 16)` arrives, which
/// makes it the batch output at index `s - DELAY`. Hence streaming output
/// `DELAY..` equals a prefix of the batch output bit for bit.
#[derive(Debug, Clone)]
pub struct StreamingResampler {
    kernel: PolyphaseKernel,
    channels: usize,
    history: Vec<f64>,
    pushed: u64,
    emitted: u64,
}

impl StreamingResampler {
    /// Output delay in 64 Hz samples (half the kernel span).
    pub const DELAY: usize = HALF_TAPS / RESAMPLE_DOWN;

    pub fn new(channels: usize) -> Self {
        Self {
            kernel: PolyphaseKernel::new(),
            channels,
            history: vec![0.0; HISTORY * channels],
            pushed: 0,
            emitted: 0,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    /// Scalars of input history kept between pushes.
    pub fn state_len(&self) -> usize {
        self.history.len()
    }

    /// Feeds one 100 Hz sample; returns at most one 64 Hz sample.
    pub fn push(&mut self, sample: &[f64]) -> Result<Option<Vec<f64>>> {
        if sample.len() != self.channels {
            return Err(Error::StateMismatch(format!(
                "resampler expects {} channels, got {}",
                self.channels,
                sample.len()
            )));
        }
        let i = self.pushed as i64;
        let slot = (self.pushed as usize % HISTORY) * self.channels;
        self.history[slot..slot + self.channels].copy_from_slice(sample);
        self.pushed += 1;

        let s = self.emitted as i64;
        if s * RESAMPLE_DOWN as i64 > i * RESAMPLE_UP as i64 + (RESAMPLE_UP as i64 - 1) {
            return Ok(None);
        }
        let m = s - Self::DELAY as i64;
        let (lo, hi) = PolyphaseKernel::input_span(m);
        debug_assert!(hi <= i && i - lo.max(0) < HISTORY as i64);
        let out = (0..self.channels)
            .map(|c| {
                self.kernel.eval(m, lo.max(0), hi, |k| {
                    self.history[(k as usize % HISTORY) * self.channels + c]
                })
            })
            .collect();
        self.emitted += 1;
        Ok(Some(out))
    }
}
