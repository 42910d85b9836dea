use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use super::augment::{make_batch_pairs, AugmentationRegistry, ViewPair};
use super::loss::{info_nce, info_nce_graph};
use super::SslConfig;
use crate::error::{Error, Result};
use crate::model::{EncoderParams, ModelConfig};
use crate::rng::{derive, rng_for};
use crate::tensor::{Graph, Tensor};
use crate::train::{clip_grad_norm, AdamW, Control, PlateauScheduler, TrainConfig};
use crate::windowing::BilateralWindow;
use crate::BILATERAL_CHANNELS;

const TAG_SHUFFLE: u64 = 0x55F1;
const TAG_EPOCH: u64 = 0xE90C;
const TAG_EVAL: u64 = 0xE7A1;
const TAG_DROPOUT: u64 = 0xD70F;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SslEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    /// InfoNCE on fixed eval-mode pairs after the epoch.
    pub eval_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    /// Encoder after the last epoch; head parameters keep their initial values.
    pub model: EncoderParams<f32>,
    /// Eval loss of the initial parameters.
    pub initial_loss: f64,
    pub curve: Vec<SslEpoch>,
}

/// Splits bilateral rows `[len x 12]` into left and right `[len x 6]`.
pub fn split_bilateral(rows: &[f32]) -> (Vec<f32>, Vec<f32>) {
    let half = BILATERAL_CHANNELS / 2;
    let mut left = Vec::with_capacity(rows.len() / 2);
    let mut right = Vec::with_capacity(rows.len() / 2);
    for r in rows.chunks(BILATERAL_CHANNELS) {
        left.extend_from_slice(&r[..half]);
        right.extend_from_slice(&r[half..]);
    }
    (left, right)
}

struct PairInput {
    anchor: (Vec<f32>, Vec<f32>),
    positive: (Vec<f32>, Vec<f32>),
}

impl From<ViewPair> for PairInput {
    fn from(p: ViewPair) -> Self {
        Self { anchor: split_bilateral(&p.anchor), positive: split_bilateral(&p.positive) }
    }
}

fn pairs_for(
    windows: &[BilateralWindow],
    idx: &[usize],
    registry: &AugmentationRegistry,
    cfg: &SslConfig,
    seed: u64,
) -> Vec<PairInput> {
    let rows: Vec<Vec<f32>> = idx.par_iter().map(|&i| windows[i].bilateral_rows()).collect();
    let refs: Vec<&[f32]> = rows.iter().map(Vec::as_slice).collect();
    let tags: Vec<u64> = idx.iter().map(|&i| i as u64).collect();
    make_batch_pairs(&refs, BILATERAL_CHANNELS, registry, cfg.augment.choice_prob, seed, &tags)
        .into_iter()
        .map(PairInput::from)
        .collect()
}

/// Builds the `[1, 4d]` node `[z_anchor, z_positive]`.
fn encode_pair(g: &mut Graph<f32>, model: &EncoderParams<f32>, p: &PairInput) -> Result<crate::tensor::NodeId> {
    let (za, _) = model.encode_graph(g, &p.anchor.0, &p.anchor.1)?;
    let (zp, _) = model.encode_graph(g, &p.positive.0, &p.positive.1)?;
    g.concat(&[za, zp])
}

/// Mean InfoNCE over fixed, unshuffled eval-mode batches.
pub fn ssl_eval_loss(
    model: &EncoderParams<f32>,
    windows: &[BilateralWindow],
    registry: &AugmentationRegistry,
    cfg: &SslConfig,
) -> Result<f64> {
    let idx: Vec<usize> = (0..windows.len()).collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for batch in idx.chunks(cfg.batch_size) {
        if batch.len() < 2 {
            continue;
        }
        let pairs = pairs_for(windows, batch, registry, cfg, derive(cfg.seed, &[TAG_EVAL]));
        let z: Vec<Vec<f32>> = pairs
            .par_iter()
            .map(|p| {
                let mut g = Graph::new(false, 0);
                let n = encode_pair(&mut g, model, p)?;
                Ok(g.value(n).data().to_vec())
            })
            .collect::<Result<_>>()?;
        let (za, zp) = unzip_pairs(&z);
        total += info_nce(&za, &zp, batch.len(), cfg.temperature)? * batch.len() as f64;
        count += batch.len();
    }
    if count == 0 {
        return Err(Error::InvalidArgument("pretraining needs at least two windows".into()));
    }
    Ok(total / count as f64)
}

fn unzip_pairs(z: &[Vec<f32>]) -> (Vec<f64>, Vec<f64>) {
    let mut za = Vec::new();
    let mut zp = Vec::new();
    for row in z {
        let half = row.len() / 2;
        za.extend(row[..half].iter().map(|&v| f64::from(v)));
        zp.extend(row[half..].iter().map(|&v| f64::from(v)));
    }
    (za, zp)
}

/// Contrastive pretraining of the encoder on unlabeled windows. Only the
/// sensor values of `windows` are read.
///
/// Each step encodes every pair once to get the batch embeddings, takes the
/// InfoNCE gradient with respect to them, then re-runs each sample with the
/// same dropout seed and backpropagates that gradient. This keeps one sample
/// graph alive at a time.
pub fn pretrain(
    windows: &[BilateralWindow],
    model_cfg: &ModelConfig,
    ssl: &SslConfig,
    train: &TrainConfig,
    on_epoch: &mut dyn FnMut(&SslEpoch) -> Control,
) -> Result<PretrainOutcome> {
    ssl.validate()?;
    train.validate()?;
    if windows.len() < 2 {
        return Err(Error::InvalidArgument("pretraining needs at least two windows".into()));
    }
    let registry = ssl.registry()?;
    let mut model = EncoderParams::<f32>::init(model_cfg, train.init_seed())?;
    let n_params = model.params.len();
    let mut adam = AdamW::new(&model.params, train.weight_decay, train.adam_betas, train.adam_eps);
    let mut sched = PlateauScheduler::new(train.lr, train.scheduler);
    let mut shuffle_rng = rng_for(ssl.seed, &[TAG_SHUFFLE]);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let initial_loss = ssl_eval_loss(&model, windows, &registry, ssl)?;
    log::info!("ssl initial loss {initial_loss:.4}");

    let mut curve = Vec::new();
    for epoch in 1..=ssl.epochs {
        let lr = sched.lr();
        order.shuffle(&mut shuffle_rng);
        let aug_seed = derive(ssl.seed, &[TAG_EPOCH, epoch as u64]);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(ssl.batch_size) {
            let b = batch.len();
            if b < 2 {
                continue;
            }
            let pairs = pairs_for(windows, batch, &registry, ssl, aug_seed);
            let drop_seed = |i: usize| derive(train.seed, &[TAG_DROPOUT, epoch as u64, i as u64]);
            let z: Vec<Vec<f32>> = batch
                .par_iter()
                .zip(&pairs)
                .map(|(&i, p)| {
                    let mut g = Graph::new(true, drop_seed(i));
                    let n = encode_pair(&mut g, &model, p)?;
                    Ok(g.value(n).data().to_vec())
                })
                .collect::<Result<_>>()?;
            let (za, zp) = unzip_pairs(&z);
            let dim = za.len() / b;
            let mut small = Graph::<f64>::new(false, 0);
            let za_n = small.variable(Tensor::new(&[b, dim], za)?);
            let zp_n = small.variable(Tensor::new(&[b, dim], zp)?);
            let loss = info_nce_graph(&mut small, za_n, zp_n, ssl.temperature)?;
            let loss_value = small.value(loss).item();
            let dz = small.backward(loss, None)?;
            let (dza, dzp) = (dz.get(za_n).expect("anchor grad"), dz.get(zp_n).expect("positive grad"));

            let results: Vec<Vec<(usize, Vec<f32>)>> = batch
                .par_iter()
                .zip(&pairs)
                .enumerate()
                .map(|(r, (&i, p))| {
                    let mut g = Graph::new(true, drop_seed(i));
                    let n = encode_pair(&mut g, &model, p)?;
                    let seed: Vec<f32> = dza[r * dim..(r + 1) * dim]
                        .iter()
                        .chain(&dzp[r * dim..(r + 1) * dim])
                        .map(|&v| v as f32)
                        .collect();
                    Ok(g.backward(n, Some(&seed))?.param_grads())
                })
                .collect::<Result<_>>()?;
            let mut acc: Vec<Option<Vec<f32>>> = vec![None; n_params];
            for grads in results {
                for (idx, g) in grads {
                    match &mut acc[idx] {
                        Some(a) => a.iter_mut().zip(&g).for_each(|(a, v)| *a += *v),
                        slot @ None => *slot = Some(g),
                    }
                }
            }
            clip_grad_norm(&mut acc, train.clip_norm);
            match adam.step(&mut model.params, &acc, lr) {
                Err(Error::Numerical(msg)) => {
                    log::warn!("ssl epoch {epoch}: step skipped: {msg}");
                    continue;
                }
                r => r?,
            }
            loss_sum += loss_value * b as f64;
            seen += b;
        }
        let eval_loss = ssl_eval_loss(&model, windows, &registry, ssl)?;
        sched.step(eval_loss);
        let rec = SslEpoch { epoch, train_loss: if seen == 0 { 0.0 } else { loss_sum / seen as f64 }, eval_loss, lr };
        log::info!("ssl epoch {epoch}: train {:.4} eval {:.4} lr {:.2e}", rec.train_loss, eval_loss, lr);
        let control = on_epoch(&rec);
        curve.push(rec);
        if control == Control::Stop {
            break;
        }
    }
    Ok(PretrainOutcome { model, initial_loss, curve })
}
