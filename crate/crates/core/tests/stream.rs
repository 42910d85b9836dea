use pdwrist::model::{EncoderParams, Output};
use pdwrist::stream::{bench, run_stream, StreamConfig, StreamEngine};
use pdwrist::{Mode, ModelConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model() -> EncoderParams<f32> {
    let cfg = ModelConfig { d: 8, n_layers: 1, n_heads: 2, ff_dim: 16, ..ModelConfig::base() };
    EncoderParams::init(&cfg, 5).unwrap()
}

fn noise(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..12).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
}

#[test]
fn prediction_cadence() {
    let m = model();
    let preds = run_stream(&m, &StreamConfig::default(), &noise(1000, 1)).unwrap();
    let ts: Vec<u64> = preds.iter().map(|p| p.timestamp).collect();
    assert_eq!(ts, vec![255, 383, 511, 639]);
    for p in &preds {
        assert!((p.p1.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!((p.p2.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(p.latency_ms >= 0.0);
    }
}

#[test]
fn first_prediction_waits_for_a_full_ring() {
    let m = model();
    let mut engine = StreamEngine::new(&m, &StreamConfig::default()).unwrap();
    let state = engine.state_len();
    let mut first = None;
    for (i, s) in noise(600, 2).iter().enumerate() {
        if engine.push(s).unwrap().is_some() && first.is_none() {
            first = Some(i);
            assert_eq!(engine.emitted(), 256);
            assert_eq!(engine.fill(), 256);
        }
        assert_eq!(engine.state_len(), state);
    }
    assert!(first.is_some());
}

#[test]
fn zero_input_repeats_one_prediction() {
    let m = model();
    let preds = run_stream(&m, &StreamConfig::default(), &vec![vec![0.0; 12]; 1000]).unwrap();
    let Output::Hierarchical { p1, p2 } = m.forward(&vec![0.0; 256 * 6], &vec![0.0; 256 * 6]).unwrap() else {
        panic!("hierarchical model")
    };
    for p in &preds {
        assert_eq!((p.p1, p.p2), (p1, p2));
    }
}

#[test]
fn runs_are_deterministic() {
    let m = model();
    let x = noise(900, 3);
    let a = run_stream(&m, &StreamConfig::default(), &x).unwrap();
    let b = run_stream(&m, &StreamConfig::default(), &x).unwrap();
    let strip = |v: &[pdwrist::stream::Prediction]| v.iter().map(|p| (p.timestamp, p.p1, p.p2)).collect::<Vec<_>>();
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn rejects_bad_inputs() {
    let m = model();
    let mut engine = StreamEngine::new(&m, &StreamConfig::default()).unwrap();
    assert!(engine.push(&[0.0; 6]).is_err());
    assert!(StreamEngine::new(&m, &StreamConfig { hop: 0, ..StreamConfig::default() }).is_err());
    let three = EncoderParams::<f32>::init(
        &ModelConfig { mode: Mode::ThreeClass, d: 8, n_layers: 1, n_heads: 2, ff_dim: 16, ..ModelConfig::base() },
        1,
    )
    .unwrap();
    assert!(StreamEngine::new(&three, &StreamConfig::default()).is_err());
}

#[test]
fn bench_report_fields() {
    let m = model();
    let run = bench(&m, 12, 2, 7).unwrap();
    let r = &run.report;
    assert_eq!(run.outputs.len(), 12);
    assert_eq!(r.n_windows, 12);
    assert!(r.mean_ms > 0.0 && r.std_ms >= 0.0 && r.p95_ms > 0.0 && r.fps > 0.0);
    assert!((r.cpu_fraction - r.mean_ms / 2000.0).abs() < 1e-12);
    assert!(bench(&m, 9, 2, 7).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]
    #[test]
    fn later_samples_never_change_earlier_predictions(seed in 0u64..1000, cut in 420usize..800) {
        let m = model();
        let x = noise(800, seed);
        let full = run_stream(&m, &StreamConfig::default(), &x).unwrap();
        let part = run_stream(&m, &StreamConfig::default(), &x[..cut]).unwrap();
        prop_assert!(part.len() <= full.len());
        for (a, b) in part.iter().zip(&full) {
            prop_assert_eq!((a.timestamp, a.p1, a.p2), (b.timestamp, b.p1, b.p2));
        }
    }
}
