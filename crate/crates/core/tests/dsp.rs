mod support;

use std::f64::consts::PI;

use pdwrist::dsp::{
    causal_filter, causal_step, design_bandpass, filtfilt, filtfilt_padlen, resample_100_to_64, FilterState,
    StreamingResampler,
};
use pdwrist::Signal;
use support::{double_pass_oracle, magnitude};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sine(n: usize, f_hz: f64, fs: f64) -> Vec<f64> {
    (0..n).map(|i| (2.0 * PI * f_hz * i as f64 / fs).sin()).collect()
}

fn column(x: Vec<f64>) -> Signal {
    let n = x.len();
    Signal::new(n, 1, x).unwrap()
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

#[test]
fn resampled_sine_matches_analytic() {
    let x = sine(2500, 4.0, 100.0);
    let y = resample_100_to_64(&column(x)).unwrap();
    assert_eq!(y.rows(), 1600);
    let want = sine(1600, 4.0, 64.0);
    let err = (32..1600 - 32).map(|i| (y.get(i, 0) - want[i]).abs()).fold(0.0, f64::max);
    assert!(err < 1e-3, "max error {err}");
}

#[test]
fn resampler_suppresses_aliasing_band() {
    let x = sine(2500, 35.0, 100.0);
    let y = resample_100_to_64(&column(x.clone())).unwrap().column(0);
    assert!(rms(&y) < 0.05 * rms(&x), "{} vs {}", rms(&y), rms(&x));
}

#[test]
fn designed_response_targets() {
    let f = design_bandpass();
    assert_eq!(f.sections.len(), 5);
    assert!(magnitude(&f, 0.0) < 1e-12);
    let m4 = magnitude(&f, 4.0);
    assert!((0.98..=1.001).contains(&m4), "{m4}");
    assert!(magnitude(&f, 30.0) < 0.1);
    // the crate's own evaluation agrees with the one above
    for hz in [0.05, 0.1, 1.0, 4.0, 20.0, 30.0] {
        assert!((f.magnitude(hz) - magnitude(&f, hz)).abs() < 1e-12);
    }
}

#[test]
fn filtfilt_matches_double_pass_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..512).map(|i| (i as f64 * 0.3).sin() + rng.random_range(-1.0..1.0)).collect();
    let f = design_bandpass();
    assert_eq!(filtfilt_padlen(&f), 30);
    let got = filtfilt(&f, &column(x.clone())).unwrap().column(0);
    let want = double_pass_oracle(&f, &x);
    let err = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-8, "max deviation {err}");
}

#[test]
fn filtfilt_passes_4hz_without_phase_shift() {
    let n = 1024;
    let x = sine(n, 4.0, 64.0);
    let y = filtfilt(&design_bandpass(), &column(x)).unwrap().column(0);
    // least-squares fit of a sin + b cos over the interior
    let (mut ss, mut sc, mut cc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 128..n - 128 {
        let t = 2.0 * PI * 4.0 * i as f64 / 64.0;
        let (s, c) = t.sin_cos();
        ss += s * s;
        sc += s * c;
        cc += c * c;
        ys += y[i] * s;
        yc += y[i] * c;
    }
    let det = ss * cc - sc * sc;
    let a = (ys * cc - yc * sc) / det;
    let b = (yc * ss - ys * sc) / det;
    let ratio = (a * a + b * b).sqrt();
    let phase = b.atan2(a);
    assert!((0.96..=1.01).contains(&ratio), "ratio {ratio}");
    assert!(phase.abs() < 0.01, "phase {phase}");
}

#[test]
fn constant_input_is_removed_after_settling() {
    // the 0.1 Hz edge puts a pole near 0.997, so settling takes minutes
    let x = vec![5.0; 12000];
    let y = causal_filter(&design_bandpass(), &column(x)).column(0);
    let tail = y[8000..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(tail < 1e-6, "{tail}");
    let y = filtfilt(&design_bandpass(), &column(vec![5.0; 512])).unwrap().column(0);
    assert!(y.iter().all(|v| v.abs() < 1e-6));
}

#[test]
fn impulse_response_decays() {
    let f = design_bandpass();
    assert!(f.max_pole_radius() < 1.0);
    let mut imp = vec![0.0; 8000];
    imp[0] = 1.0;
    let y = causal_filter(&f, &column(imp)).column(0);
    let energy: f64 = y.iter().map(|v| v * v).sum();
    assert!(energy.is_finite());
    let tail = |k: usize| y[k..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(tail(5000) < 1e-8, "tail {}", tail(5000));
    // envelope shrinks at the rate of the slowest pole
    let r = f.max_pole_radius();
    let ratio = tail(4000) / tail(3000);
    assert!(ratio < 1.5 * r.powi(1000), "{ratio} vs {}", r.powi(1000));
}

#[test]
fn streaming_resampler_is_a_delayed_prefix_of_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let batch = resample_100_to_64(&column(x.clone())).unwrap().column(0);
    let mut rs = StreamingResampler::new(1);
    let mut out = Vec::new();
    for v in &x {
        if let Some(s) = rs.push(&[*v]).unwrap() {
            out.push(s[0]);
        }
    }
    assert_eq!(out.len(), 640);
    let d = StreamingResampler::DELAY;
    // outputs far enough from the end see the same inputs as batch
    for s in d..out.len() - 64 {
        assert!((out[s] - batch[s - d]).abs() < 1e-12, "sample {s}");
    }
}

proptest! {
    #[test]
    fn causal_steps_equal_batch(vals in prop::collection::vec(-10.0f64..10.0, 1..300)) {
        let f = design_bandpass();
        let batch = causal_filter(&f, &column(vals.clone())).column(0);
        let mut st = FilterState::new(&f, 1);
        for (i, v) in vals.iter().enumerate() {
            let y = causal_step(&f, &mut st, &[*v]).unwrap();
            prop_assert_eq!(y[0].to_bits(), batch[i].to_bits());
        }
    }

    #[test]
    fn causal_filter_is_causal(vals in prop::collection::vec(-10.0f64..10.0, 40..200), cut in 1usize..39) {
        let f = design_bandpass();
        let full = causal_filter(&f, &column(vals.clone())).column(0);
        let prefix = causal_filter(&f, &column(vals[..cut].to_vec())).column(0);
        prop_assert_eq!(&full[..cut], &prefix[..]);
    }
}
