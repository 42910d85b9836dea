//! Bilateral wrist IMU classification pipeline.
//!
//! The crate covers the whole path from raw 100 Hz recordings to predictions:
//!
//! - [`ingest`]: PADS-layout loader and a synthetic cohort generator.
//! - [`dsp`]: transient trim, 100 → 64 Hz polyphase resampling, Butterworth
//!   band-pass (zero-phase batch and causal streaming).
//! - [`windowing`]: class-dependent hop windowing, hierarchical labels,
//!   patient-level stratified folds and the on-disk window cache.
//! - [`tensor`]: a small reverse-mode autodiff engine.
//! - [`model`]: the dual-stream cross-attention encoder.
//! - [`train`]: masked hierarchical loss, AdamW, plateau schedule, fold driver.
//! - [`ssl`]: augmentations, InfoNCE pretraining and label-efficiency runs.
//! - [`stream`]: real-time inference engine and latency benchmark.
//! - [`config`]: the JSON run configuration shared by the CLI.

pub mod config;
pub mod dsp;
pub mod error;
pub mod ingest;
pub mod model;
pub mod rng;
pub mod signal;
pub mod ssl;
pub mod stream;
pub mod tensor;
pub mod train;
pub mod windowing;

pub use error::{Error, Result};
pub use ingest::{Cohort, Group, RawRecording, Task};
pub use model::{Mode, ModelConfig};
pub use signal::Signal;
pub use windowing::{BilateralWindow, FoldSpec, HeadTarget, HierLabel, WindowSet};

/// Window length in 64 Hz samples.
pub const WINDOW_LEN: usize = 256;
/// IMU channels per wrist (3 accelerometer + 3 gyroscope axes).
pub const CHANNELS: usize = 6;
/// Both wrists side by side.
pub const BILATERAL_CHANNELS: usize = 2 * CHANNELS;
