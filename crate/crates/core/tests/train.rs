mod support;

use std::collections::BTreeSet;

use pdwrist::ingest::synth_cohort;
use pdwrist::model::{EncoderParams, HeadNodes, ModelConfig};
use pdwrist::tensor::{Graph, ParamStore, Tensor};
use pdwrist::train::{
    clip_grad_norm, grad_norm, masked_ce, masked_ce_graph, train_fold, train_three_class, AdamW, Control,
    PlateauConfig, PlateauScheduler, TrainConfig,
};
use pdwrist::windowing::{encode_label, WindowCache, WindowingConfig};
use pdwrist::{Group, Mode};
use support::stack_rows;

const LN2: f64 = std::f64::consts::LN_2;

fn tiny_model() -> ModelConfig {
    ModelConfig { d: 8, n_layers: 1, n_heads: 2, ff_dim: 16, ..ModelConfig::base() }
}

#[test]
fn masked_loss_examples() {
    let hc = encode_label(Group::Hc);
    let pd = encode_label(Group::Pd);
    let dd = encode_label(Group::Dd);
    assert_eq!(masked_ce(&[[1.0, 0.0]], &[[0.3, 0.7]], &[hc]), 0.0);
    assert!((masked_ce(&[[0.5, 0.5]], &[[0.5, 0.5]], &[pd]) - LN2).abs() < 1e-9);
    let l = masked_ce(&[[0.5, 0.5], [0.9, 0.1]], &[[0.2, 0.8], [0.5, 0.5]], &[hc, dd]);
    assert!((l - LN2).abs() < 1e-9);
}

#[test]
fn masked_head_gets_exactly_zero_gradient() {
    let mut g = Graph::<f64>::new(false, 0);
    let z1 = g.variable(Tensor::new(&[2, 2], vec![0.3, -0.2, 1.0, 0.4]).unwrap());
    let z2 = g.variable(Tensor::new(&[2, 2], vec![-0.5, 0.7, 0.1, 0.9]).unwrap());
    let p1 = g.softmax(z1);
    let p2 = g.softmax(z2);
    // HC masks head 2 and DD masks head 1; mask row 0 of head 2 and row 1 of head 1
    let labels = [encode_label(Group::Hc), encode_label(Group::Dd)];
    let loss = masked_ce_graph(&mut g, p1, p2, &labels).unwrap().unwrap();
    let grads = g.backward(loss, None).unwrap();
    let g1 = grads.get(z1).unwrap();
    let g2 = grads.get(z2).unwrap();
    assert_eq!(&g1[2..], &[0.0, 0.0]);
    assert_eq!(&g2[..2], &[0.0, 0.0]);
    assert!(g1[..2].iter().any(|v| *v != 0.0));
    assert!(g2[2..].iter().any(|v| *v != 0.0));
}

fn store(vals: &[f64]) -> ParamStore<f64> {
    let mut s = ParamStore::new();
    s.insert("theta", Tensor::new(&[vals.len()], vals.to_vec()).unwrap()).unwrap();
    s
}

#[test]
fn adamw_examples() {
    let mut p = store(&[1.0, -2.0]);
    let mut adam = AdamW::new(&p, 0.0, [0.9, 0.999], 1e-8);
    adam.step(&mut p, &[Some(vec![0.0, 0.0])], 5e-4).unwrap();
    assert_eq!(p.tensor(0).data(), &[1.0, -2.0]);

    let mut p = store(&[1.0, -2.0]);
    let mut adam = AdamW::new(&p, 0.01, [0.9, 0.999], 1e-8);
    adam.step(&mut p, &[Some(vec![0.0, 0.0])], 5e-4).unwrap();
    let k = 1.0 - 5e-6;
    assert_eq!(p.tensor(0).data(), &[k, -2.0 * k]);

    // f = theta^2 / 2, gradient theta
    let mut p = store(&[1.0]);
    let mut adam = AdamW::new(&p, 0.01, [0.9, 0.999], 1e-8);
    adam.step(&mut p, &[Some(vec![1.0])], 0.1).unwrap();
    assert!(p.tensor(0).data()[0].abs() < 1.0);

    let before = p.clone();
    assert!(adam.step(&mut p, &[Some(vec![f64::NAN])], 0.1).is_err());
    assert_eq!(p, before);
}

#[test]
fn clipping_examples() {
    let mut g = vec![Some(vec![0.3, 0.4]), None];
    clip_grad_norm(&mut g, 1.0);
    assert_eq!(g[0].as_deref(), Some(&[0.3, 0.4][..]));

    let mut g = vec![Some(vec![0.0, 4.0]), Some(vec![0.0])];
    let pre = clip_grad_norm(&mut g, 1.0);
    assert_eq!(pre, 4.0);
    assert_eq!(g[0].as_deref(), Some(&[0.0, 1.0][..]));
    assert!((grad_norm(&g) - 1.0).abs() < 1e-9);

    let mut g = vec![Some(vec![0.0f64; 3])];
    clip_grad_norm(&mut g, 1.0);
    assert_eq!(g[0].as_deref(), Some(&[0.0; 3][..]));
}

#[test]
fn plateau_schedule_examples() {
    let cfg = PlateauConfig::default();
    assert_eq!((cfg.factor, cfg.patience), (0.5, 5));
    let mut s = PlateauScheduler::new(1.0, cfg);
    for e in 0..10 {
        assert_eq!(s.step(1.0 - 0.01 * e as f64), 1.0);
    }
    let mut s = PlateauScheduler::new(1.0, cfg);
    let lrs: Vec<f64> = (0..6).map(|_| s.step(1.0)).collect();
    assert_eq!(lrs, vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.5]);
    let mut s = PlateauScheduler::new(1.0, cfg);
    for _ in 0..11 {
        s.step(1.0);
    }
    assert_eq!(s.lr(), 0.25);
}

#[test]
fn defaults_follow_the_recipe() {
    let t = TrainConfig::default();
    assert_eq!((t.lr, t.weight_decay, t.batch_size, t.max_epochs, t.clip_norm), (5e-4, 0.01, 32, 100, 1.0));
    let m = ModelConfig::base();
    assert_eq!((m.d, m.n_layers, m.n_heads, m.ff_dim, m.dropout), (64, 3, 8, 256, 0.2));
    let e = ModelConfig::edge();
    assert_eq!((e.d, e.dropout), (32, 0.12));
}

fn small_split() -> pdwrist::windowing::Dataset {
    let cohort = synth_cohort(4, 10.0, 42).unwrap();
    let cfg = WindowingConfig { folds: 2, ..WindowingConfig::default() };
    WindowCache::build(&cohort, true, &cfg).unwrap().split(0).unwrap()
}

#[test]
fn same_seed_gives_identical_curves() {
    let ds = small_split();
    let cfg = TrainConfig { max_epochs: 2, ..TrainConfig::default() };
    let run = || train_fold(&ds, &tiny_model(), &cfg, &mut |_| Control::Continue).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.model, b.model);
    assert_eq!(a.curve.len(), 2);
    assert!(a.best_epoch >= 1 && a.best_epoch <= 2);
}

#[test]
fn callback_can_stop_early() {
    let ds = small_split();
    let cfg = TrainConfig { max_epochs: 5, ..TrainConfig::default() };
    let out = train_fold(&ds, &tiny_model(), &cfg, &mut |_| Control::Stop).unwrap();
    assert_eq!(out.curve.len(), 1);
}

#[test]
fn three_class_favors_the_majority_without_rebalancing() {
    // 2 HC, 6 PD, 2 DD subjects windowed with one shared hop
    let cohort = synth_cohort(6, 10.0, 42).unwrap();
    let keep: BTreeSet<&str> = cohort
        .subjects
        .iter()
        .filter(|(id, g)| **g == Group::Pd || id.ends_with("001") || id.ends_with("002"))
        .map(|(id, _)| id.as_str())
        .collect();
    let mut small = cohort.clone();
    small.subjects.retain(|id, _| keep.contains(id.as_str()));
    small.recordings.retain(|r| keep.contains(r.subject_id.as_str()));
    let cfg = WindowingConfig { folds: 2, ..WindowingConfig::uniform() };
    let ds = WindowCache::build(&small, true, &cfg).unwrap().split(0).unwrap();
    let train = TrainConfig { max_epochs: 2, ..TrainConfig::default() };
    let out = train_three_class(&ds, &tiny_model(), &train, &mut |_| Control::Continue).unwrap();
    assert_eq!(out.model.config.mode, Mode::ThreeClass);
    let per_class = out.val_metrics.three_class.unwrap().per_class_accuracy;
    assert!(per_class[1] >= per_class[0] && per_class[1] >= per_class[2], "{per_class:?}");
}

/// `[1, k]` nodes stacked into `[n, k]`.
#[test]
fn masked_graph_loss_matches_plain_loss() {
    let ds = small_split();
    let model = EncoderParams::<f64>::init(&tiny_model(), 1).unwrap();
    let idx = [0, ds.train.len() / 2, ds.train.len() - 1];
    let mut g = Graph::new(false, 0);
    let (mut n1, mut n2, mut v1, mut v2) = (vec![], vec![], vec![], vec![]);
    for &i in &idx {
        let w = &ds.train.windows[i];
        let HeadNodes::Hierarchical { p1, p2 } = model.forward_graph(&mut g, &w.left, &w.right).unwrap().heads else {
            panic!()
        };
        n1.push(p1);
        n2.push(p2);
        v1.push([g.value(p1).data()[0], g.value(p1).data()[1]]);
        v2.push([g.value(p2).data()[0], g.value(p2).data()[1]]);
    }
    let p1 = stack_rows(&mut g, &n1);
    let p2 = stack_rows(&mut g, &n2);
    let labels: Vec<_> = idx.iter().map(|&i| ds.train.labels[i]).collect();
    let node = masked_ce_graph(&mut g, p1, p2, &labels).unwrap().unwrap();
    assert!((g.value(node).item() - masked_ce(&v1, &v2, &labels)).abs() < 1e-12);
}
