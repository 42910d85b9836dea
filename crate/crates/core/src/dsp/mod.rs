//! Signal conditioning: transient trim, 100 → 64 Hz resampling and the
//! Butterworth band-pass in zero-phase (training) and causal (streaming) form.

mod butter;
mod resample;
mod sos;

pub use butter::{design_bandpass, design_butter_bandpass, BandpassDesign, SosFilter, Section};
pub use resample::{resample_100_to_64, PolyphaseKernel, StreamingResampler, RESAMPLE_DOWN, RESAMPLE_UP};
pub use sos::{causal_filter, causal_step, causal_step_into, filtfilt, filtfilt_padlen, sosfilt_zi, FilterState};

use crate::error::{Error, Result};
use crate::ingest::RawRecording;

/// Rows dropped from the start of every task (0.5 s at 100 Hz).
pub const TRIM_SAMPLES: usize = 50;
/// Output rate of the resampler.
pub const TARGET_RATE_HZ: f64 = 64.0;

/// Drops the settling transient at the start of a recording.
pub fn trim_transient(rec: &RawRecording) -> Result<RawRecording> {
    if rec.rows() <= TRIM_SAMPLES {
        return Err(Error::RecordingTooShort { rows: rec.rows(), min: TRIM_SAMPLES });
    }
    let n = rec.rows();
    Ok(RawRecording {
        left: rec.left.slice_rows(TRIM_SAMPLES, n),
        right: rec.right.slice_rows(TRIM_SAMPLES, n),
        ..rec.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Group, Task};
    use crate::signal::Signal;

    fn rec(rows: usize) -> RawRecording {
        let data: Vec<f64> = (0..rows * 6).map(|v| v as f64).collect();
        let s = Signal::new(rows, 6, data).unwrap();
        RawRecording {
            subject_id: "S".into(),
            group: Group::Pd,
            task: Task::Relaxed,
            sample_rate_hz: 100.0,
            left: s.clone(),
            right: s,
        }
    }

    #[test]
    fn trims_fifty_rows() {
        let out = trim_transient(&rec(1000)).unwrap();
        assert_eq!(out.rows(), 950);
        assert_eq!(out.left.row(0), rec(1000).left.row(50));
        assert_eq!(out.subject_id, "S");
    }

    #[test]
    fn boundary_lengths() {
        assert_eq!(trim_transient(&rec(51)).unwrap().rows(), 1);
        assert!(matches!(trim_transient(&rec(50)), Err(Error::RecordingTooShort { .. })));
    }
}
