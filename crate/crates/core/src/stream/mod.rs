//! Real-time inference: 100 Hz samples in, predictions every two seconds out.
//!
//! Each pushed sample goes through the streaming polyphase resampler; every
//! emitted 64 Hz sample is causally band-passed and written into a
//! `[256 x 12]` ring. The first prediction fires when the ring first fills,
//! then every 128 emitted samples.

mod bench;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dsp::{causal_step_into, design_butter_bandpass, BandpassDesign, FilterState, SosFilter, StreamingResampler};
use crate::error::{Error, Result};
use crate::model::{EncoderParams, Mode, Output};
use crate::{BILATERAL_CHANNELS, CHANNELS, WINDOW_LEN};

pub use bench::{bench, peak_rss_bytes, BenchReport, BenchRun};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StreamConfig {
    /// Emitted samples between predictions once the ring is full.
    pub hop: usize,
    pub bandpass: bool,
    pub filter: BandpassDesign,
    pub bench_windows: usize,
    pub warmup_windows: usize,
    pub seed: u64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            hop: 128,
            bandpass: true,
            filter: BandpassDesign::default(),
            bench_windows: 100,
            warmup_windows: 10,
            seed: 42,
        }
    }
}

/// One streaming prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    /// Index of the newest 64 Hz sample in the window.
    pub timestamp: u64,
    pub p1: [f64; 2],
    pub p2: [f64; 2],
    /// Wall-clock time of the forward pass.
    pub latency_ms: f64,
}

/// Fixed-capacity circular buffer of 12-channel rows.
#[derive(Debug, Clone)]
pub struct Ring {
    data: Vec<f32>,
    rows: usize,
    head: usize,
    fill: usize,
}

impl Ring {
    pub fn new(rows: usize) -> Self {
        Self { data: vec![0.0; rows * BILATERAL_CHANNELS], rows, head: 0, fill: 0 }
    }

    pub fn push(&mut self, row: &[f64]) {
        let start = self.head * BILATERAL_CHANNELS;
        for (d, v) in self.data[start..start + BILATERAL_CHANNELS].iter_mut().zip(row) {
            *d = *v as f32;
        }
        self.head = (self.head + 1) % self.rows;
        self.fill = (self.fill + 1).min(self.rows);
    }

    pub fn fill(&self) -> usize {
        self.fill
    }

    pub fn capacity(&self) -> usize {
        self.rows
    }

    /// Left and right `[rows x 6]` halves, oldest row first.
    pub fn split_window(&self, left: &mut Vec<f32>, right: &mut Vec<f32>) {
        left.clear();
        right.clear();
        for i in 0..self.rows {
            let r = (self.head + i) % self.rows * BILATERAL_CHANNELS;
            left.extend_from_slice(&self.data[r..r + CHANNELS]);
            right.extend_from_slice(&self.data[r + CHANNELS..r + BILATERAL_CHANNELS]);
        }
    }
}

/// Streaming state machine for one input stream.
pub struct StreamEngine<'m> {
    model: &'m EncoderParams<f32>,
    resampler: StreamingResampler,
    filter: Option<(SosFilter, FilterState)>,
    ring: Ring,
    hop: usize,
    emitted: u64,
    since_last: usize,
    scratch: (Vec<f32>, Vec<f32>),
}

impl<'m> StreamEngine<'m> {
    pub fn new(model: &'m EncoderParams<f32>, cfg: &StreamConfig) -> Result<Self> {
        let mc = &model.config;
        if mc.mode != Mode::Hierarchical {
            return Err(Error::StateMismatch("streaming needs a hierarchical model".into()));
        }
        if mc.window_len != WINDOW_LEN || mc.channels != CHANNELS {
            return Err(Error::StateMismatch(format!(
                "model window [{} x {}] does not match the stream window [{WINDOW_LEN} x {CHANNELS}]",
                mc.window_len, mc.channels
            )));
        }
        if cfg.hop == 0 || cfg.hop > WINDOW_LEN {
            return Err(Error::InvalidArgument(format!("hop {} not in 1..={WINDOW_LEN}", cfg.hop)));
        }
        let filter = if cfg.bandpass {
            let sos = design_butter_bandpass(cfg.filter)?;
            let state = FilterState::new(&sos, BILATERAL_CHANNELS);
            Some((sos, state))
        } else {
            None
        };
        Ok(Self {
            model,
            resampler: StreamingResampler::new(BILATERAL_CHANNELS),
            filter,
            ring: Ring::new(WINDOW_LEN),
            hop: cfg.hop,
            emitted: 0,
            since_last: 0,
            scratch: (Vec::with_capacity(WINDOW_LEN * CHANNELS), Vec::with_capacity(WINDOW_LEN * CHANNELS)),
        })
    }

    /// Number of 64 Hz samples emitted so far.
    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    pub fn fill(&self) -> usize {
        self.ring.fill()
    }

    /// Scalars of persistent state (resampler history, filter registers,
    /// ring). Constant over the life of the engine.
    pub fn state_len(&self) -> usize {
        self.resampler.state_len()
            + self.filter.as_ref().map_or(0, |(_, s)| s.len())
            + self.ring.capacity() * BILATERAL_CHANNELS
    }

    /// Feeds one 100 Hz sample of 12 channels.
    pub fn push(&mut self, sample: &[f64]) -> Result<Option<Prediction>> {
        if sample.len() != BILATERAL_CHANNELS {
            return Err(Error::Shape(format!("sample of {} channels, expected {BILATERAL_CHANNELS}", sample.len())));
        }
        let Some(mut y) = self.resampler.push(sample)? else {
            return Ok(None);
        };
        if let Some((sos, state)) = self.filter.as_mut() {
            causal_step_into(sos, state, &mut y)?;
        }
        self.ring.push(&y);
        self.emitted += 1;
        if self.ring.fill() < WINDOW_LEN {
            return Ok(None);
        }
        let first = self.emitted == WINDOW_LEN as u64;
        self.since_last += 1;
        if !first && self.since_last < self.hop {
            return Ok(None);
        }
        self.since_last = 0;
        Ok(Some(self.infer()?))
    }

    /// The current window as bilateral rows, oldest first.
    pub fn window_rows(&self) -> Vec<f32> {
        let (mut l, mut r) = (Vec::new(), Vec::new());
        self.ring.split_window(&mut l, &mut r);
        l.chunks(CHANNELS).zip(r.chunks(CHANNELS)).flat_map(|(a, b)| a.iter().chain(b).copied()).collect()
    }

    fn infer(&mut self) -> Result<Prediction> {
        let (left, right) = &mut self.scratch;
        self.ring.split_window(left, right);
        let start = Instant::now();
        let out = self.model.forward(left, right)?;
        let latency_ms = start.elapsed().as_secs_f64() * 1e3;
        let Output::Hierarchical { p1, p2 } = out else {
            return Err(Error::StateMismatch("streaming needs a hierarchical model".into()));
        };
        Ok(Prediction { timestamp: self.emitted - 1, p1, p2, latency_ms })
    }
}

/// Runs a whole 100 Hz stream through a fresh engine.
pub fn run_stream(model: &EncoderParams<f32>, cfg: &StreamConfig, samples: &[Vec<f64>]) -> Result<Vec<Prediction>> {
    let mut engine = StreamEngine::new(model, cfg)?;
    let mut out = Vec::new();
    for s in samples {
        if let Some(p) = engine.push(s)? {
            out.push(p);
        }
    }
    Ok(out)
}

/// `timestamp,p1_0,p1_1,p2_0,p2_1` rows.
pub fn write_predictions_csv(path: &Path, preds: &[Prediction]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "timestamp,p1_0,p1_1,p2_0,p2_1")?;
    for p in preds {
        writeln!(w, "{},{},{},{},{}", p.timestamp, p.p1[0], p.p1[1], p.p2[0], p.p2[1])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a headered CSV of 12-channel 100 Hz samples.
pub fn read_samples_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| Error::Parse {
        file: path.to_path_buf(),
        row: 0,
        msg: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Parse { file: path.to_path_buf(), row, msg: e.to_string() })?;
        if rec.len() != BILATERAL_CHANNELS {
            return Err(Error::MalformedDataset(format!(
                "{} row {row}: {} columns, expected {BILATERAL_CHANNELS}",
                path.display(),
                rec.len()
            )));
        }
        let vals = rec
            .iter()
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse { file: path.to_path_buf(), row, msg: e.to_string() })?;
        out.push(vals);
    }
    Ok(out)
}
