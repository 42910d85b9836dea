//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion on
//! stderr (bypassing the test harness capture) and fails if any criterion
//! fails. `PDWRIST_ACCEPTANCE=1,5,9` restricts the run to a subset;
//! criterion 11 runs only when `PDWRIST_PADS_DIR` points at a PADS-layout
//! dataset.

mod common;
#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::{ok, pdwrist, read_json, tiny_workspace};
use pdwrist::dsp::{causal_filter, causal_step, design_bandpass, filtfilt, FilterState};
use pdwrist::ingest::synth_cohort;
use pdwrist::model::{save_model, EncoderParams, HeadNodes};
use pdwrist::ssl::{info_nce, info_nce_graph, pretrain, run_fraction, FineTune, SslConfig, Supervised};
use pdwrist::stream::{run_stream, StreamConfig};
use pdwrist::tensor::{Graph, ParamStore};
use pdwrist::train::{masked_ce, masked_ce_graph, train_fold, Control, TrainConfig};
use pdwrist::windowing::{dhwt_segment, encode_label, window_offsets, WindowCache, WindowingConfig};
use pdwrist::{Group, ModelConfig, RawRecording, Signal, Task};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{brute_force_nce, double_pass_oracle, magnitude, stack_rows};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn report(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

#[test]
fn acceptance() {
    let criteria: [(u32, &str, Check); 11] = [
        (1, "gradient correctness", c1_gradients),
        (2, "filter fidelity", c2_filter),
        (3, "DHWT window counts and ratio", c3_dhwt),
        (4, "masked loss semantics", c4_masked_loss),
        (5, "InfoNCE oracle", c5_info_nce),
        (6, "end-to-end learning", c6_learning),
        (7, "band-pass ablation", c7_ablation),
        (8, "label efficiency", c8_label_efficiency),
        (9, "streaming contract", c9_streaming),
        (10, "reproducibility", c10_reproducibility),
        (11, "real-data cross-validation", c11_real_data),
    ];
    let only: Option<Vec<u32>> = std::env::var("PDWRIST_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (id, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        if id == 11 && std::env::var_os("PDWRIST_PADS_DIR").is_none() {
            report(&format!("criterion 11 ({name}): SKIP, set PDWRIST_PADS_DIR to run"));
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => report(&format!("criterion {id} ({name}): PASS [{secs:.1}s] {detail}")),
            Err(detail) => {
                report(&format!("criterion {id} ({name}): FAIL [{secs:.1}s] {detail}"));
                failed.push(id);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

// 1 ------------------------------------------------------------------------

fn grad_model() -> ModelConfig {
    ModelConfig { d: 8, n_layers: 2, n_heads: 2, ff_dim: 16, window_len: 8, ..ModelConfig::base() }
}

fn random_side(rng: &mut ChaCha8Rng, len: usize) -> Vec<f32> {
    (0..len * 6).map(|_| rng.random_range(-1.5f32..1.5)).collect()
}

/// Batch loss and, when asked, its autodiff gradient (one vector per parameter).
type LossFn<'a> = dyn Fn(&EncoderParams<f64>, bool) -> (f64, Vec<Vec<f64>>) + 'a;

fn autodiff(params: &ParamStore<f64>, g: &Graph<f64>, loss: pdwrist::tensor::NodeId, grad: bool) -> (f64, Vec<Vec<f64>>) {
    if !grad {
        return (g.value(loss).item(), Vec::new());
    }
    let grads = g.backward(loss, None).expect("backward");
    let mut out: Vec<Vec<f64>> = (0..params.len()).map(|i| vec![0.0; params.tensor(i).len()]).collect();
    for (i, gr) in grads.param_grads() {
        out[i] = gr;
    }
    (g.value(loss).item(), out)
}

/// Central differences over every scalar; returns the worst relative error,
/// the number of probes whose stencil straddles a ReLU kink (checked against
/// the better one-sided difference instead) and where the worst error sits.
fn finite_difference_error(model: &EncoderParams<f64>, f: &LossFn<'_>) -> (f64, usize, String) {
    let eps = 1e-5;
    let (l0, ad) = f(model, true);
    let rel = |a: f64, b: f64| (a - b).abs() / (a.abs() + b.abs()).max(1e-6);
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    let mut at = String::new();
    let mut kinks = 0;
    for p in 0..model.params.len() {
        for j in 0..model.params.tensor(p).len() {
            let orig = model.params.tensor(p).data()[j];
            probe.params.tensor_mut(p).data_mut()[j] = orig + eps;
            let (lp, _) = f(&probe, false);
            probe.params.tensor_mut(p).data_mut()[j] = orig - eps;
            let (lm, _) = f(&probe, false);
            probe.params.tensor_mut(p).data_mut()[j] = orig;
            let a = ad[p][j];
            let curvature = (lp - 2.0 * l0 + lm) / (eps * eps);
            let mut err = rel(a, (lp - lm) / (2.0 * eps));
            if err >= 1e-4 {
                // the stencil may straddle a ReLU kink: only the side the
                // parameters sit on is differentiable
                let one_sided = rel(a, (lp - l0) / eps).min(rel(a, (l0 - lm) / eps));
                if one_sided < err {
                    kinks += 1;
                    err = one_sided;
                }
            }
            if err > worst {
                worst = err;
                at = format!("{}[{j}] autodiff {a:e} curvature {curvature:.1e}", model.params.name(p));
            }
        }
    }
    (worst, kinks, at)
}

fn c1_gradients() -> Result<String, String> {
    let cfg = grad_model();
    let labels = [Group::Hc, Group::Pd, Group::Dd, Group::Pd].map(encode_label);
    let mut worst_ce = 0.0f64;
    let mut worst_nce = 0.0f64;
    let mut n_params = 0;
    let mut kinks = 0;
    let (mut at_ce, mut at_nce) = (String::new(), String::new());
    for seed in [1u64, 2, 3] {
        let model = EncoderParams::<f64>::init(&cfg, seed).map_err(|e| e.to_string())?;
        n_params = model.params.num_scalars();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let batch: Vec<(Vec<f32>, Vec<f32>)> =
            (0..4).map(|_| (random_side(&mut rng, 8), random_side(&mut rng, 8))).collect();
        let positives: Vec<(Vec<f32>, Vec<f32>)> = batch
            .iter()
            .map(|(l, r)| {
                let mut j = |v: &Vec<f32>| v.iter().map(|x| x + rng.random_range(-0.1f32..0.1)).collect::<Vec<f32>>();
                (j(l), j(r))
            })
            .collect();

        let ce = |m: &EncoderParams<f64>, grad: bool| {
            let mut g = Graph::new(false, 0);
            let (mut n1, mut n2) = (Vec::new(), Vec::new());
            for (l, r) in &batch {
                let HeadNodes::Hierarchical { p1, p2 } = m.forward_graph(&mut g, l, r).expect("forward").heads else {
                    unreachable!("hierarchical model")
                };
                n1.push(p1);
                n2.push(p2);
            }
            let p1 = stack_rows(&mut g, &n1);
            let p2 = stack_rows(&mut g, &n2);
            let loss = masked_ce_graph(&mut g, p1, p2, &labels).expect("loss").expect("labelled terms");
            autodiff(&m.params, &g, loss, grad)
        };
        let (e, k, at) = finite_difference_error(&model, &ce);
        if e > worst_ce {
            worst_ce = e;
            at_ce = at;
        }
        kinks += k;

        let nce = |m: &EncoderParams<f64>, grad: bool| {
            let mut g = Graph::new(false, 0);
            let mut embed = |set: &[(Vec<f32>, Vec<f32>)]| {
                let rows: Vec<_> = set.iter().map(|(l, r)| m.encode_graph(&mut g, l, r).expect("encode").0).collect();
                stack_rows(&mut g, &rows)
            };
            let z = embed(&batch);
            let zp = embed(&positives);
            let loss = info_nce_graph(&mut g, z, zp, 0.1).expect("info_nce");
            autodiff(&m.params, &g, loss, grad)
        };
        let (e, k, at) = finite_difference_error(&model, &nce);
        if e > worst_nce {
            worst_nce = e;
            at_nce = at;
        }
        kinks += k;
    }
    ensure(worst_ce < 1e-4 && worst_nce < 1e-4, || {
        format!("max relative error masked CE {worst_ce:.2e} at {at_ce}, InfoNCE {worst_nce:.2e} at {at_nce}")
    })?;
    Ok(format!(
        "3 seeds, {n_params} parameters: masked CE {worst_ce:.2e}, InfoNCE {worst_nce:.2e}; {kinks} kink probes one-sided"
    ))
}

// 2 ------------------------------------------------------------------------

fn c2_filter() -> Result<String, String> {
    let f = design_bandpass();
    let (h0, h4, h30) = (magnitude(&f, 0.0), magnitude(&f, 4.0), magnitude(&f, 30.0));
    ensure(h0 < 1e-12, || format!("|H(0)| = {h0:e}"))?;
    ensure((0.98..=1.001).contains(&h4), || format!("|H(4 Hz)| = {h4}"))?;
    ensure(h30 < 0.1, || format!("|H(30 Hz)| = {h30}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<f64> = (0..512).map(|_| rng.random_range(-1.0..1.0)).collect();
    let got = filtfilt(&f, &Signal::new(512, 1, x.clone()).unwrap()).map_err(|e| e.to_string())?.column(0);
    let want = double_pass_oracle(&f, &x);
    let dev = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(dev < 1e-8, || format!("filtfilt deviates from the double-pass oracle by {dev:e}"))?;

    let n = 2000;
    let data: Vec<f64> = (0..n * 12).map(|_| rng.random_range(-5.0..5.0)).collect();
    let sig = Signal::new(n, 12, data).unwrap();
    let batch = causal_filter(&f, &sig);
    let mut st = FilterState::new(&f, 12);
    for i in 0..n {
        let y = causal_step(&f, &mut st, sig.row(i)).map_err(|e| e.to_string())?;
        let same = y.iter().zip(batch.row(i)).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, || format!("streaming differs from batch at sample {i}"))?;
    }
    Ok(format!("|H(0)|={h0:.1e} |H(4)|={h4:.5} |H(30)|={h30:.4}; filtfilt dev {dev:.1e}; streaming bit-exact"))
}

// 3 ------------------------------------------------------------------------

fn c3_dhwt() -> Result<String, String> {
    let mut runner = TestRunner::new(PropConfig { cases: 1000, ..PropConfig::default() });
    let cfg = WindowingConfig::default();
    runner
        .run(&(256usize..6000, 0usize..3), |(n, g)| {
            let group = Group::ALL[g];
            let hop = [76, 256, 89][g];
            prop_assert_eq!(cfg.hop(group), hop);
            let want = (n - 256) / hop + 1;
            prop_assert_eq!(window_offsets(n, 256, hop).len(), want);
            let rec = RawRecording {
                subject_id: "S".into(),
                group,
                task: Task::ALL[0],
                sample_rate_hz: 64.0,
                left: Signal::zeros(n, 6),
                right: Signal::zeros(n, 6),
            };
            prop_assert_eq!(dhwt_segment(&rec, &cfg).unwrap().len(), want);
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    let cohort = synth_cohort(10, 20.0, 42).map_err(|e| e.to_string())?;
    let cache = WindowCache::build(&cohort, true, &cfg).map_err(|e| e.to_string())?;
    let [hc, pd, dd] = cache.set.group_counts().map(|c| c as f64);
    let (rh, rd) = (hc / pd, dd / pd);
    ensure((2.5..=4.7).contains(&rh) && (2.2..=4.0).contains(&rd), || {
        format!("ratio {rh:.2}:1:{rd:.2}")
    })?;
    Ok(format!("1000 cases; synthetic ratio {rh:.2}:1:{rd:.2} ({hc}/{pd}/{dd} windows)"))
}

// 4 ------------------------------------------------------------------------

fn c4_masked_loss() -> Result<String, String> {
    let ln2 = std::f64::consts::LN_2;
    let [hc, pd, dd] = [Group::Hc, Group::Pd, Group::Dd].map(encode_label);
    let a = masked_ce(&[[1.0, 0.0]], &[[0.3, 0.7]], &[hc]);
    let b = masked_ce(&[[0.5, 0.5]], &[[0.5, 0.5]], &[pd]);
    let c = masked_ce(&[[0.5, 0.5], [0.9, 0.1]], &[[0.2, 0.8], [0.5, 0.5]], &[hc, dd]);
    ensure(a.abs() < 1e-9 && (b - ln2).abs() < 1e-9 && (c - ln2).abs() < 1e-9, || {
        format!("examples gave {a}, {b}, {c}")
    })?;

    let mut g = Graph::<f64>::new(false, 0);
    let z1 = g.variable(pdwrist::tensor::Tensor::new(&[2, 2], vec![0.3, -0.2, 1.0, 0.4]).unwrap());
    let z2 = g.variable(pdwrist::tensor::Tensor::new(&[2, 2], vec![-0.5, 0.7, 0.1, 0.9]).unwrap());
    let p1 = g.softmax(z1);
    let p2 = g.softmax(z2);
    let loss = masked_ce_graph(&mut g, p1, p2, &[hc, dd]).unwrap().unwrap();
    let grads = g.backward(loss, None).unwrap();
    let masked = [&grads.get(z1).unwrap()[2..], &grads.get(z2).unwrap()[..2]];
    ensure(masked.iter().all(|s| s.iter().all(|v| *v == 0.0)), || format!("masked logits got {masked:?}"))?;
    Ok(format!("losses {a:.1e}, {b:.12}, {c:.12}; masked-logit gradient exactly zero"))
}

// 5 ------------------------------------------------------------------------

fn c5_info_nce() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let z: Vec<f64> = (0..8 * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let zp: Vec<f64> = (0..8 * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = info_nce(&z, &zp, 8, 0.1).map_err(|e| e.to_string())?;
        worst = worst.max((fast - brute_force_nce(&z, &zp, 8, 0.1)).abs());
        let c = rng.random_range(0.01..100.0);
        let scaled: Vec<f64> = z.iter().map(|v| v * c).collect();
        worst = worst.max((info_nce(&scaled, &zp, 8, 0.1).unwrap() - fast).abs());
    }
    let same: Vec<f64> = (0..16 * 4).map(|_| 0.7).collect();
    let ident = (info_nce(&same, &same, 16, 0.1).unwrap() - 16f64.ln()).abs();
    ensure(worst < 1e-9 && ident < 1e-9, || format!("oracle/scale deviation {worst:e}, identical case {ident:e}"))?;
    Ok(format!("oracle and scale deviation {worst:.1e}; identical embeddings off ln B by {ident:.1e}"))
}

// 6 ------------------------------------------------------------------------

fn c6_learning() -> Result<String, String> {
    let cohort = synth_cohort(10, 10.0, 42).map_err(|e| e.to_string())?;
    let ds = WindowCache::build(&cohort, true, &WindowingConfig::default())
        .and_then(|c| c.split(0))
        .map_err(|e| e.to_string())?;
    let cfg = TrainConfig { max_epochs: 15, ..TrainConfig::default() };
    let start = Instant::now();
    let mut reached = None;
    let outcome = train_fold(&ds, &ModelConfig::base(), &cfg, &mut |r| {
        if r.val_min_head_accuracy >= 0.95 {
            reached = Some((r.epoch, r.val_min_head_accuracy));
            Control::Stop
        } else {
            Control::Continue
        }
    })
    .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    match reached {
        Some((epoch, acc)) => Ok(format!(
            "both heads >= {acc:.3} at epoch {epoch}; {secs:.0}s on {cores} core(s)"
        )),
        None => Err(format!(
            "15 epochs, best val accuracy {:.3}, {secs:.0}s on {cores} core(s)",
            outcome.best_val_accuracy
        )),
    }
}

// 7 ------------------------------------------------------------------------

/// Same budget for both arms: the edge preset for a fixed number of epochs.
const ABLATION_CONFIG: &str = r#"{
  "model": { "d": 32, "n_heads": 4, "dropout": 0.12 },
  "train": { "max_epochs": 10 }
}"#;

fn c7_ablation() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    std::fs::write(w.join("ablation.json"), ABLATION_CONFIG).unwrap();
    let run = |args: &[&str]| {
        let mut all = vec!["--config", "ablation.json"];
        all.extend_from_slice(args);
        ok(w, &all);
    };
    run(&["synth", "--out", "data", "--artifacts"]);
    run(&["preprocess", "--data", "data", "--out", "bp"]);
    run(&["preprocess", "--data", "data", "--out", "raw", "--no-bandpass"]);
    run(&["train", "--cache", "bp", "--out", "train_bp"]);
    run(&["train", "--cache", "raw", "--out", "train_raw"]);
    for d in ["train_bp", "train_raw"] {
        let csv = w.join(d).join("loss_curve.csv");
        ensure(csv.exists(), || format!("{} missing", csv.display()))?;
    }
    let best = |d: &str| read_json(&w.join(d).join("metrics.json"))["best_val_accuracy"].as_f64().unwrap_or(f64::NAN);
    let (bp, raw) = (best("train_bp"), best("train_raw"));
    ensure(raw < bp, || format!("best val accuracy band-pass {bp:.4}, no band-pass {raw:.4}"))?;
    Ok(format!("best val accuracy band-pass {bp:.4} > no band-pass {raw:.4}; both loss curves written"))
}

// 8 ------------------------------------------------------------------------

fn c8_label_efficiency() -> Result<String, String> {
    let cohort = synth_cohort(10, 10.0, 42).map_err(|e| e.to_string())?;
    let ssl = SslConfig { epochs: 3, ..SslConfig::default() };
    let ds = WindowCache::build(&cohort, true, &WindowingConfig::default())
        .and_then(|c| c.split(ssl.eval_fold))
        .map_err(|e| e.to_string())?;
    let model_cfg = ModelConfig::edge();
    let train = TrainConfig { max_epochs: 10, ..TrainConfig::default() };
    let pre = pretrain(&ds.train.windows, &model_cfg, &ssl, &train, &mut |_| Control::Continue)
        .map_err(|e| e.to_string())?;
    let run = |strategy: &dyn pdwrist::ssl::AdaptationStrategy, init, f| {
        run_fraction(strategy, init, &ds, f, &model_cfg, &train, ssl.seed).map(|(row, _)| row.mean_acc())
    };
    let ft20 = run(&FineTune, Some(&pre.model), 0.2).map_err(|e| e.to_string())?;
    let ft100 = run(&FineTune, Some(&pre.model), 1.0).map_err(|e| e.to_string())?;
    let sup20 = run(&Supervised, None, 0.2).map_err(|e| e.to_string())?;
    let detail = format!("fine-tune 20% {ft20:.4}, 100% {ft100:.4}; supervised 20% {sup20:.4}");
    ensure(ft20 >= ft100 - 0.05 && sup20 <= ft20 + 0.02, || detail.clone())?;
    Ok(detail)
}

// 9 ------------------------------------------------------------------------

fn c9_streaming() -> Result<String, String> {
    let model = EncoderParams::<f32>::init(&ModelConfig::base(), 9).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let samples: Vec<Vec<f64>> = (0..1000).map(|_| (0..12).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let cfg = StreamConfig::default();
    let preds = run_stream(&model, &cfg, &samples).map_err(|e| e.to_string())?;
    let ts: Vec<u64> = preds.iter().map(|p| p.timestamp).collect();
    ensure(ts == [255, 383, 511, 639], || format!("timestamps {ts:?}"))?;

    for cut in [300usize, 450, 613, 777, 999] {
        let part = run_stream(&model, &cfg, &samples[..cut]).map_err(|e| e.to_string())?;
        let prefix_ok = part.len() <= preds.len()
            && part.iter().zip(&preds).all(|(a, b)| (a.timestamp, a.p1, a.p2) == (b.timestamp, b.p1, b.p2));
        ensure(prefix_ok, || format!("truncating at {cut} changed earlier predictions"))?;
    }

    let dir = tempfile::tempdir().unwrap();
    save_model(&dir.path().join("base.ckpt"), &model, serde_json::Value::Null).map_err(|e| e.to_string())?;
    ok(dir.path(), &["stream-bench", "--model", "base.ckpt", "--out", "stream"]);
    let bench = read_json(&dir.path().join("stream/bench.json"));
    for k in ["mean_ms", "std_ms", "p95_ms", "fps", "peak_rss_bytes"] {
        ensure(bench[k].is_number(), || format!("bench.json lacks {k}"))?;
    }
    let n = bench["n_windows"].as_u64().unwrap_or(0);
    ensure(n >= 100, || format!("only {n} measured windows"))?;
    Ok(format!(
        "timestamps {ts:?}; truncation holds; {n} windows, mean {:.2} ms, p95 {:.2} ms",
        bench["mean_ms"].as_f64().unwrap(),
        bench["p95_ms"].as_f64().unwrap()
    ))
}

// 10 -----------------------------------------------------------------------

fn c10_reproducibility() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    tiny_workspace(w);
    ok(w, &["--config", "tiny.json", "cv", "--cache", "cache", "--out", "cv_a"]);
    let echo = format!("cv_a/{}", pdwrist_cli::RESOLVED_CONFIG_FILE);
    ok(w, &["--config", &echo, "cv", "--cache", "cache", "--out", "cv_b"]);
    let a = std::fs::read(w.join("cv_a/metrics.json")).unwrap();
    let b = std::fs::read(w.join("cv_b/metrics.json")).unwrap();
    ensure(a == b, || "metrics.json differs between the run and its echo replay".into())?;
    Ok(format!("metrics.json identical ({} bytes)", a.len()))
}

// 11 -----------------------------------------------------------------------

fn c11_real_data() -> Result<String, String> {
    let data = std::env::var("PDWRIST_PADS_DIR").map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    ok(w, &["preprocess", "--data", &data, "--out", "cache"]);
    let out = pdwrist(w, &["cv", "--cache", "cache", "--out", "cv"]);
    ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    let m = read_json(&w.join("cv/metrics.json"));
    let folds = m["folds"].as_array().map_or(0, Vec::len);
    ensure(folds == 5, || format!("{folds} folds"))?;
    let table = String::from_utf8_lossy(&out.stdout).into_owned();
    report(&table);
    let mean = |k: &str| m["aggregate"][k]["mean"].as_f64().unwrap_or(f64::NAN) * 100.0;
    Ok(format!(
        "5 folds; HC-vs-PD {:.2}%, PD-vs-DD {:.2}%",
        mean("head1_accuracy"),
        mean("head2_accuracy")
    ))
}
