use std::time::Instant;

use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{EncoderParams, Output};
use crate::rng::rng_for;

/// Latency summary written to `bench.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub p95_ms: f64,
    /// Windows per second at the mean latency.
    pub fps: f64,
    pub peak_rss_bytes: Option<u64>,
    pub n_windows: usize,
    pub warmup_windows: usize,
    /// Share of one core used at one prediction per `cadence_s`.
    pub cpu_fraction: f64,
    pub cadence_s: f64,
}

/// A report plus the model outputs it measured.
#[derive(Debug, Clone)]
pub struct BenchRun {
    pub report: BenchReport,
    pub outputs: Vec<Output>,
}

/// Peak resident set size of this process (`VmHWM`), where available.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Times `n_windows` forward passes on seeded random windows after `warmup`
/// untimed ones. Latency covers the forward pass only.
pub fn bench(model: &EncoderParams<f32>, n_windows: usize, warmup: usize, seed: u64) -> Result<BenchRun> {
    if n_windows < 10 {
        return Err(Error::InvalidArgument(format!("bench needs at least 10 windows, got {n_windows}")));
    }
    let n = model.config.window_len * model.config.channels;
    let mut rng = rng_for(seed, &[0xBE7C]);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let windows: Vec<(Vec<f32>, Vec<f32>)> = (0..warmup + n_windows)
        .map(|_| {
            let mut side = || (0..n).map(|_| normal.sample(&mut rng) as f32).collect::<Vec<f32>>();
            (side(), side())
        })
        .collect();
    for (l, r) in &windows[..warmup] {
        model.forward(l, r)?;
    }
    let mut lat = Vec::with_capacity(n_windows);
    let mut outputs = Vec::with_capacity(n_windows);
    for (l, r) in &windows[warmup..] {
        let t = Instant::now();
        let out = model.forward(l, r)?;
        lat.push(t.elapsed().as_secs_f64() * 1e3);
        outputs.push(out);
    }
    let (mean_ms, std_ms) = crate::train::mean_std(&lat);
    let mut sorted = lat.clone();
    sorted.sort_by(f64::total_cmp);
    let rank = ((0.95 * n_windows as f64).ceil() as usize).clamp(1, n_windows);
    let cadence_s = 2.0;
    let report = BenchReport {
        mean_ms,
        std_ms,
        p95_ms: sorted[rank - 1],
        fps: 1e3 / mean_ms,
        peak_rss_bytes: peak_rss_bytes(),
        n_windows,
        warmup_windows: warmup,
        cpu_fraction: mean_ms / (cadence_s * 1e3),
        cadence_s,
    };
    Ok(BenchRun { report, outputs })
}
