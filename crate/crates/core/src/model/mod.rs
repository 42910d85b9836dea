//! Dual-stream cross-attention encoder with hierarchical heads.
//!
//! Each wrist is projected to `d` dimensions and given sinusoidal positions.
//! Every layer then runs, per stream, cross-attention against the other
//! wrist, self-attention and a ReLU feed-forward block, each wrapped as
//! `LayerNorm(x + Dropout(sublayer(x)))`. Both cross-attentions read the
//! layer-input states. Mean pooling over time gives `z = [z_L, z_R]`.

mod attention_export;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::tensor::{Axis, Graph, NodeId, ParamStore, Real, Tensor};
use crate::{CHANNELS, WINDOW_LEN};

pub use attention_export::{export_attention, AttentionMaps};

pub const LN_EPS: f64 = 1e-5;
const SIDES: [&str; 2] = ["L", "R"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Hierarchical,
    #[serde(alias = "three-class")]
    ThreeClass,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hierarchical" => Ok(Mode::Hierarchical),
            "three-class" | "three_class" => Ok(Mode::ThreeClass),
            other => Err(Error::InvalidArgument(format!("unknown mode {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    pub window_len: usize,
    pub channels: usize,
    pub mode: Mode,
    /// Adds sinusoidal positions after the input projection.
    pub positional_encoding: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::base()
    }
}

impl ModelConfig {
    pub fn base() -> Self {
        Self {
            d: 64,
            n_layers: 3,
            n_heads: 8,
            ff_dim: 256,
            dropout: 0.2,
            window_len: WINDOW_LEN,
            channels: CHANNELS,
            mode: Mode::Hierarchical,
            positional_encoding: true,
        }
    }

    pub fn edge() -> Self {
        Self { d: 32, n_heads: 4, dropout: 0.12, ..Self::base() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "base" => Ok(Self::base()),
            "edge" => Ok(Self::edge()),
            other => Err(Error::InvalidArgument(format!("unknown model preset {other}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n_heads == 0 || self.d % self.n_heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "embedding dimension {} not divisible by {} heads",
                self.d, self.n_heads
            )));
        }
        if self.n_layers == 0 || self.ff_dim == 0 || self.window_len == 0 || self.channels == 0 {
            return Err(Error::InvalidArgument("model sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Parameter shapes in creation order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (d, ff, c) = (self.d, self.ff_dim, self.channels);
        let mut out = Vec::new();
        for s in SIDES {
            out.push((format!("in.{s}.w"), vec![c, d]));
            out.push((format!("in.{s}.b"), vec![d]));
        }
        for l in 0..self.n_layers {
            for s in SIDES {
                let p = format!("layer{l}.{s}");
                for block in ["cross", "self"] {
                    for m in ["wq", "wk", "wv", "wo"] {
                        out.push((format!("{p}.{block}.{m}"), vec![d, d]));
                    }
                }
                out.push((format!("{p}.ffn.w1"), vec![d, ff]));
                out.push((format!("{p}.ffn.b1"), vec![ff]));
                out.push((format!("{p}.ffn.w2"), vec![ff, d]));
                out.push((format!("{p}.ffn.b2"), vec![d]));
                for ln in ["ln1", "ln2", "ln3"] {
                    out.push((format!("{p}.{ln}.g"), vec![d]));
                    out.push((format!("{p}.{ln}.b"), vec![d]));
                }
            }
        }
        match self.mode {
            Mode::Hierarchical => {
                for h in ["head1", "head2"] {
                    out.push((format!("{h}.w"), vec![2 * d, 2]));
                    out.push((format!("{h}.b"), vec![2]));
                }
            }
            Mode::ThreeClass => {
                out.push(("head3.w".into(), vec![2 * d, 3]));
                out.push(("head3.b".into(), vec![3]));
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

/// Whether a parameter belongs to a classification head.
pub fn is_head_param(name: &str) -> bool {
    name.starts_with("head")
}

/// Encoder configuration plus its learnable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
}

impl<T: Real> EncoderParams<T> {
    /// Xavier-uniform matrices, zero biases, unit layer-norm gains.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        for (name, shape) in config.param_shapes() {
            params.insert(name.clone(), init_tensor(&name, &shape, seed))?;
        }
        Ok(Self { config: config.clone(), params })
    }

    /// Re-draws the head parameters, leaving the encoder untouched.
    pub fn reset_heads(&mut self, seed: u64) -> Result<()> {
        for (name, shape) in self.config.param_shapes() {
            if is_head_param(&name) {
                *self.params.get_mut(&name).expect("head parameter") = init_tensor(&name, &shape, seed);
            }
        }
        Ok(())
    }

    /// Wraps loaded tensors, checking names and shapes against `config`.
    pub fn from_params(config: &ModelConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let want = config.param_shapes();
        if want.len() != params.len() {
            return Err(Error::StateMismatch(format!(
                "model expects {} tensors, checkpoint has {}",
                want.len(),
                params.len()
            )));
        }
        for (name, shape) in &want {
            let t = params.require(name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::StateMismatch(format!(
                    "parameter {name}: expected shape {shape:?}, found {:?}",
                    t.shape()
                )));
            }
        }
        Ok(Self { config: config.clone(), params })
    }

    pub fn cast<U: Real>(&self) -> EncoderParams<U> {
        EncoderParams { config: self.config.clone(), params: self.params.cast() }
    }

    /// Exchanges every left-stream tensor with its right counterpart and the
    /// two halves of each head's input rows.
    pub fn swap_sides(&self) -> Self {
        let mut out = self.clone();
        let d = self.config.d;
        let names: Vec<String> = self.params.names().map(str::to_string).collect();
        for name in &names {
            if let Some(other) = mirrored_name(name) {
                *out.params.get_mut(name).expect("own name") = self.params.get(&other).expect("mirror").clone();
            } else if is_head_param(name) && name.ends_with(".w") {
                let t = self.params.get(name).expect("own name");
                let k = t.cols();
                let mut data = t.data().to_vec();
                let (top, bottom) = data.split_at_mut(d * k);
                top.swap_with_slice(bottom);
                *out.params.get_mut(name).expect("own name") = Tensor::new(t.shape(), data).expect("same shape");
            }
        }
        out
    }
}

fn mirrored_name(name: &str) -> Option<String> {
    if name.contains(".L.") {
        Some(name.replacen(".L.", ".R.", 1))
    } else if name.contains(".R.") {
        Some(name.replacen(".R.", ".L.", 1))
    } else {
        None
    }
}

fn init_tensor<T: Real>(name: &str, shape: &[usize], seed: u64) -> Tensor<T> {
    let last = name.rsplit('.').next().unwrap_or("");
    if shape.len() == 2 {
        let (fan_in, fan_out) = (shape[0], shape[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut rng = rng_for(seed, &[crate::rng::str_tag(name)]);
        let data = (0..fan_in * fan_out).map(|_| T::lit(rng.random_range(-bound..bound))).collect();
        Tensor::new(shape, data).expect("shape matches")
    } else if last == "g" {
        Tensor::full(shape, T::one())
    } else {
        Tensor::zeros(shape)
    }
}

/// Sinusoidal positions `[t, 2i] = sin(t / 10000^(2i/d))`,
/// `[t, 2i+1] = cos(t / 10000^(2i/d))`.
pub fn positional_encoding<T: Real>(len: usize, d: usize) -> Tensor<T> {
    let mut data = vec![T::zero(); len * d];
    for t in 0..len {
        for j in 0..d {
            let i2 = (j - j % 2) as f64;
            let angle = t as f64 / 10000f64.powf(i2 / d as f64);
            data[t * d + j] = T::lit(if j % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::new(&[len, d], data).expect("shape matches")
}

/// Graph nodes of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardNodes {
    /// Pooled embedding `[1, 2d]`.
    pub z: NodeId,
    pub heads: HeadNodes,
    /// Cross-attention nodes per layer, `[left, right]`.
    pub cross_attention: Vec<[NodeId; 2]>,
}

#[derive(Debug, Clone, Copy)]
pub enum HeadNodes {
    Hierarchical { p1: NodeId, p2: NodeId },
    ThreeClass { p: NodeId },
}

/// Head probabilities of one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Output {
    Hierarchical { p1: [f64; 2], p2: [f64; 2] },
    ThreeClass { p: [f64; 3] },
}

impl<T: Real> EncoderParams<T> {
    fn check_input(&self, left: &[f32], right: &[f32]) -> Result<()> {
        let n = self.config.window_len * self.config.channels;
        if left.len() != n || right.len() != n {
            return Err(Error::Shape(format!(
                "window sides of {} and {} values, expected [{} x {}]",
                left.len(),
                right.len(),
                self.config.window_len,
                self.config.channels
            )));
        }
        Ok(())
    }

    /// `H = x W_in + b + PE` for one wrist.
    pub fn embed(&self, g: &mut Graph<T>, side: usize, x: &[f32]) -> Result<NodeId> {
        let cfg = &self.config;
        let x = g.constant(Tensor::from_f32(&[cfg.window_len, cfg.channels], x)?);
        let w = g.param(&self.params, &format!("in.{}.w", SIDES[side]))?;
        let b = g.param(&self.params, &format!("in.{}.b", SIDES[side]))?;
        let h = g.linear(x, w, b)?;
        if cfg.positional_encoding {
            let pe = g.constant(positional_encoding(cfg.window_len, cfg.d));
            g.add(h, pe)
        } else {
            Ok(h)
        }
    }

    /// Returns `(output, attention node)`.
    fn mha(&self, g: &mut Graph<T>, prefix: &str, q_in: NodeId, kv_in: NodeId) -> Result<(NodeId, NodeId)> {
        let wq = g.param(&self.params, &format!("{prefix}.wq"))?;
        let wk = g.param(&self.params, &format!("{prefix}.wk"))?;
        let wv = g.param(&self.params, &format!("{prefix}.wv"))?;
        let wo = g.param(&self.params, &format!("{prefix}.wo"))?;
        let q = g.matmul(q_in, wq)?;
        let k = g.matmul(kv_in, wk)?;
        let v = g.matmul(kv_in, wv)?;
        let a = g.attention(q, k, v, self.config.n_heads)?;
        Ok((g.matmul(a, wo)?, a))
    }

    fn residual_norm(&self, g: &mut Graph<T>, prefix: &str, x: NodeId, sub: NodeId) -> Result<NodeId> {
        let sub = g.dropout(sub, self.config.dropout)?;
        let sum = g.add(x, sub)?;
        let gain = g.param(&self.params, &format!("{prefix}.g"))?;
        let bias = g.param(&self.params, &format!("{prefix}.b"))?;
        g.layer_norm(sum, gain, bias, LN_EPS)
    }

    fn ffn(&self, g: &mut Graph<T>, prefix: &str, x: NodeId) -> Result<NodeId> {
        let w1 = g.param(&self.params, &format!("{prefix}.w1"))?;
        let b1 = g.param(&self.params, &format!("{prefix}.b1"))?;
        let w2 = g.param(&self.params, &format!("{prefix}.w2"))?;
        let b2 = g.param(&self.params, &format!("{prefix}.b2"))?;
        let h = g.linear(x, w1, b1)?;
        let h = g.relu(h);
        g.linear(h, w2, b2)
    }

    /// One encoder layer on both streams. Returns the new states and the two
    /// cross-attention nodes.
    pub fn cross_attn_layer(
        &self,
        g: &mut Graph<T>,
        layer: usize,
        h: [NodeId; 2],
    ) -> Result<([NodeId; 2], [NodeId; 2])> {
        let mut cross = [h[0]; 2];
        let mut next = h;
        for s in 0..2 {
            let p = format!("layer{layer}.{}", SIDES[s]);
            let (c, a) = self.mha(g, &format!("{p}.cross"), h[s], h[1 - s])?;
            cross[s] = a;
            next[s] = self.residual_norm(g, &format!("{p}.ln1"), h[s], c)?;
        }
        for (s, state) in next.iter_mut().enumerate() {
            let p = format!("layer{layer}.{}", SIDES[s]);
            let (sa, _) = self.mha(g, &format!("{p}.self"), *state, *state)?;
            let x = self.residual_norm(g, &format!("{p}.ln2"), *state, sa)?;
            let f = self.ffn(g, &format!("{p}.ffn"), x)?;
            *state = self.residual_norm(g, &format!("{p}.ln3"), x, f)?;
        }
        Ok((next, cross))
    }

    /// Encoder only: `z = [mean_t H_L, mean_t H_R]` as a `[1, 2d]` node.
    pub fn encode_graph(&self, g: &mut Graph<T>, left: &[f32], right: &[f32]) -> Result<(NodeId, Vec<[NodeId; 2]>)> {
        self.check_input(left, right)?;
        let mut h = [self.embed(g, 0, left)?, self.embed(g, 1, right)?];
        let mut cross = Vec::with_capacity(self.config.n_layers);
        for l in 0..self.config.n_layers {
            let (next, c) = self.cross_attn_layer(g, l, h)?;
            h = next;
            cross.push(c);
        }
        let zl = g.mean(h[0], Axis::Rows);
        let zr = g.mean(h[1], Axis::Rows);
        Ok((g.concat(&[zl, zr])?, cross))
    }

    /// Head probabilities from a pooled embedding node.
    pub fn heads_graph(&self, g: &mut Graph<T>, z: NodeId) -> Result<HeadNodes> {
        let mut head = |name: &str| -> Result<NodeId> {
            let w = g.param(&self.params, &format!("{name}.w"))?;
            let b = g.param(&self.params, &format!("{name}.b"))?;
            let logits = g.linear(z, w, b)?;
            Ok(g.softmax(logits))
        };
        Ok(match self.config.mode {
            Mode::Hierarchical => HeadNodes::Hierarchical { p1: head("head1")?, p2: head("head2")? },
            Mode::ThreeClass => HeadNodes::ThreeClass { p: head("head3")? },
        })
    }

    pub fn forward_graph(&self, g: &mut Graph<T>, left: &[f32], right: &[f32]) -> Result<ForwardNodes> {
        let (z, cross_attention) = self.encode_graph(g, left, right)?;
        let heads = self.heads_graph(g, z)?;
        Ok(ForwardNodes { z, heads, cross_attention })
    }

    /// Eval-mode pooled embedding.
    pub fn encode(&self, left: &[f32], right: &[f32]) -> Result<Vec<T>> {
        let mut g = Graph::new(false, 0);
        let (z, _) = self.encode_graph(&mut g, left, right)?;
        Ok(g.value(z).data().to_vec())
    }

    /// Eval-mode head probabilities.
    pub fn forward(&self, left: &[f32], right: &[f32]) -> Result<Output> {
        let mut g = Graph::new(false, 0);
        let nodes = self.forward_graph(&mut g, left, right)?;
        Ok(read_output(&g, nodes.heads))
    }
}

pub fn read_output<T: Real>(g: &Graph<T>, heads: HeadNodes) -> Output {
    let f = |id: NodeId, i: usize| g.value(id).data()[i].to_f64().unwrap_or(f64::NAN);
    match heads {
        HeadNodes::Hierarchical { p1, p2 } => Output::Hierarchical { p1: [f(p1, 0), f(p1, 1)], p2: [f(p2, 0), f(p2, 1)] },
        HeadNodes::ThreeClass { p } => Output::ThreeClass { p: [f(p, 0), f(p, 1), f(p, 2)] },
    }
}

/// Writes parameters with the model configuration (and `info`) as metadata.
pub fn save_model<T: Real>(path: &std::path::Path, model: &EncoderParams<T>, info: serde_json::Value) -> Result<()> {
    let meta = serde_json::json!({ "model": model.config, "info": info });
    crate::tensor::save_checkpoint(path, &model.params, &meta)
}

/// Reads a checkpoint written by [`save_model`]; returns the model and its
/// `info` metadata.
pub fn load_model<T: Real>(path: &std::path::Path) -> Result<(EncoderParams<T>, serde_json::Value)> {
    let ckpt = crate::tensor::load_checkpoint::<T>(path)?;
    let cfg_value = ckpt
        .metadata
        .get("model")
        .cloned()
        .ok_or_else(|| Error::StateMismatch(format!("{}: no model configuration", path.display())))?;
    let config: ModelConfig = serde_json::from_value(cfg_value)?;
    let info = ckpt.metadata.get("info").cloned().unwrap_or(serde_json::Value::Null);
    Ok((EncoderParams::from_params(&config, ckpt.params)?, info))
}
