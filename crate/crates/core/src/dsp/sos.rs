use super::butter::{Section, SosFilter};
use crate::error::{Error, Result};
use crate::signal::Signal;

/// Transposed direct-form II delay registers: `[channel][section] = [z1, z2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    registers: Vec<[f64; 2]>,
    n_sections: usize,
    channels: usize,
}

impl FilterState {
    /// Zeroed registers for `channels` independent channels.
    pub fn new(filter: &SosFilter, channels: usize) -> Self {
        Self {
            registers: vec![[0.0; 2]; filter.n_sections() * channels],
            n_sections: filter.n_sections(),
            channels,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn n_sections(&self) -> usize {
        self.n_sections
    }

    /// Total register count (two per section per channel).
    pub fn len(&self) -> usize {
        self.registers.len() * 2
    }

    pub fn is_empty(&self) -> bool {
        self.registers.is_empty()
    }

    fn channel_mut(&mut self, c: usize) -> &mut [[f64; 2]] {
        &mut self.registers[c * self.n_sections..(c + 1) * self.n_sections]
    }
}

#[inline]
fn step_sections(sections: &[Section], zi: &mut [[f64; 2]], x: f64) -> f64 {
    let mut v = x;
    for (s, z) in sections.iter().zip(zi.iter_mut()) {
        let y = s[0] * v + z[0];
        z[0] = s[1] * v - s[4] * y + z[1];
        z[1] = s[2] * v - s[5] * y;
        v = y;
    }
    v
}

fn sosfilt_inplace(sections: &[Section], zi: &mut [[f64; 2]], x: &mut [f64]) {
    for v in x.iter_mut() {
        *v = step_sections(sections, zi, *v);
    }
}

/// One causal sample for every channel. Identical arithmetic to
/// [`causal_filter`], so sample-by-sample and batch outputs match bit for bit.
pub fn causal_step(filter: &SosFilter, state: &mut FilterState, sample: &[f64]) -> Result<Vec<f64>> {
    let mut out = sample.to_vec();
    causal_step_into(filter, state, &mut out)?;
    Ok(out)
}

/// In-place variant of [`causal_step`].
pub fn causal_step_into(filter: &SosFilter, state: &mut FilterState, sample: &mut [f64]) -> Result<()> {
    if state.n_sections != filter.n_sections() || state.channels != sample.len() {
        return Err(Error::StateMismatch(format!(
            "state has {} sections x {} channels, filter has {} sections and sample {} channels",
            state.n_sections,
            state.channels,
            filter.n_sections(),
            sample.len()
        )));
    }
    for (c, v) in sample.iter_mut().enumerate() {
        *v = step_sections(&filter.sections, state.channel_mut(c), *v);
    }
    Ok(())
}

/// Single forward pass from zero state over every column.
pub fn causal_filter(filter: &SosFilter, signal: &Signal) -> Signal {
    let mut state = FilterState::new(filter, signal.cols());
    let mut out = signal.clone();
    let cols = signal.cols();
    for row in out.data_mut().chunks_mut(cols) {
        for (c, v) in row.iter_mut().enumerate() {
            *v = step_sections(&filter.sections, state.channel_mut(c), *v);
        }
    }
    out
}

/// Steady-state registers for a unit step input, cascaded through sections.
pub fn sosfilt_zi(filter: &SosFilter) -> Vec<[f64; 2]> {
    let mut scale = 1.0;
    filter
        .sections
        .iter()
        .map(|s| {
            let (b0, b1, b2, a1, a2) = (s[0], s[1], s[2], s[4], s[5]);
            let dc = (b0 + b1 + b2) / (1.0 + a1 + a2);
            let z = [scale * (b1 + b2 - (a1 + a2) * dc), scale * (b2 - a2 * dc)];
            scale *= dc;
            z
        })
        .collect()
}

/// Edge padding used by [`filtfilt`]: three times the filter order.
pub fn filtfilt_padlen(filter: &SosFilter) -> usize {
    3 * 2 * filter.n_sections()
}

/// Zero-phase forward-backward filtering with odd-reflection padding and
/// steady-state initial conditions.
pub fn filtfilt(filter: &SosFilter, signal: &Signal) -> Result<Signal> {
    let pad = filtfilt_padlen(filter);
    let n = signal.rows();
    if n <= pad {
        return Err(Error::SignalTooShort { len: n, min: pad + 1 });
    }
    let zi = sosfilt_zi(filter);
    let columns: Vec<Vec<f64>> = signal
        .columns()
        .iter()
        .map(|x| filtfilt_channel(&filter.sections, &zi, x, pad))
        .collect();
    Signal::from_columns(&columns)
}

fn filtfilt_channel(sections: &[Section], zi: &[[f64; 2]], x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let mut state: Vec<[f64; 2]> = zi.iter().map(|z| [z[0] * ext[0], z[1] * ext[0]]).collect();
    sosfilt_inplace(sections, &mut state, &mut ext);

    ext.reverse();
    let mut state: Vec<[f64; 2]> = zi.iter().map(|z| [z[0] * ext[0], z[1] * ext[0]]).collect();
    sosfilt_inplace(sections, &mut state, &mut ext);
    ext.reverse();

    ext[pad..pad + n].to_vec()
}
