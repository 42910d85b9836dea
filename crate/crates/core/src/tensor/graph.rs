use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::gemm::{gemm, View, ViewMut};
use super::{ParamStore, Real, Tensor};
use crate::error::{Error, Result};

/// Index of a node in its [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

/// Reduction axis for [`Graph::mean`], on the `[rows, cols]` view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Average over rows, producing `[1, cols]`.
    Rows,
    /// Average over the last dimension, producing `[.., 1]`.
    Cols,
}

#[derive(Debug)]
pub(crate) enum Op<T> {
    Leaf,
    Param(usize),
    MatMul(NodeId, NodeId),
    Linear(NodeId, NodeId, NodeId),
    Add(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Scale(NodeId, T),
    Relu(NodeId),
    Softmax(NodeId),
    LogSoftmax(NodeId),
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId, rstd: Vec<T> },
    Dropout { x: NodeId, mask: Vec<T> },
    Mean(NodeId, Axis),
    Concat(Vec<NodeId>),
    Transpose(NodeId),
    Sdpa { q: NodeId, k: NodeId, v: NodeId, heads: usize, probs: Vec<T> },
    CrossEntropy { probs: NodeId, targets: Vec<Option<usize>> },
    Log(NodeId),
    Exp(NodeId),
    Sum(NodeId),
    L2NormalizeRows { x: NodeId, norms: Vec<T> },
}

#[derive(Debug)]
pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) op: Op<T>,
    pub(crate) needs_grad: bool,
}

/// Probability floor inside the cross-entropy log.
pub(crate) const CE_FLOOR: f64 = 1e-12;

/// Tape of one forward computation.
pub struct Graph<T> {
    pub(crate) nodes: Vec<Node<T>>,
    train: bool,
    rng: ChaCha8Rng,
    trainable: Box<dyn Fn(&str) -> bool + Send + Sync>,
}

impl<T: Real> Graph<T> {
    /// `train` enables dropout; `seed` drives the dropout masks.
    pub fn new(train: bool, seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            train,
            rng: ChaCha8Rng::seed_from_u64(seed),
            trainable: Box::new(|_| true),
        }
    }

    /// Parameters whose names fail `pred` are bound as constants.
    pub fn set_trainable(&mut self, pred: impl Fn(&str) -> bool + Send + Sync + 'static) {
        self.trainable = Box::new(pred);
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Attention probabilities `[heads, Tq, Tk]` saved by an attention node.
    pub fn attention_probs(&self, id: NodeId) -> Option<&[T]> {
        match &self.nodes[id.0].op {
            Op::Sdpa { probs, .. } => Some(probs),
            _ => None,
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[NodeId]) -> NodeId {
        let needs_grad = match op {
            Op::Leaf => false,
            Op::Param(_) => true,
            _ => inputs.iter().any(|i| self.nodes[i.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn mismatch(&self, what: &str, a: NodeId, b: NodeId) -> Error {
        Error::Shape(format!("{what}: {:?} vs {:?}", self.shape(a), self.shape(b)))
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> NodeId {
        self.push(t, Op::Leaf, &[])
    }

    /// Input that receives a gradient without being a stored parameter.
    pub fn variable(&mut self, t: Tensor<T>) -> NodeId {
        let id = self.push(t, Op::Leaf, &[]);
        self.nodes[id.0].needs_grad = true;
        id
    }

    /// Binds parameter `name` of `store`. Frozen parameters become constants.
    pub fn param(&mut self, store: &ParamStore<T>, name: &str) -> Result<NodeId> {
        let idx = store
            .index_of(name)
            .ok_or_else(|| Error::StateMismatch(format!("missing parameter {name}")))?;
        let value = store.tensor(idx).clone();
        if (self.trainable)(name) {
            Ok(self.push(value, Op::Param(idx), &[]))
        } else {
            Ok(self.push(value, Op::Leaf, &[]))
        }
    }

    /// `[.., k] x [k, n] -> [.., n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if tb.shape().len() != 2 || ta.cols() != tb.shape()[0] {
            return Err(self.mismatch("matmul", a, b));
        }
        let out = matmul_fwd(ta, tb);
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// `x W + b`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        if tw.shape().len() != 2 || tx.cols() != tw.shape()[0] {
            return Err(self.mismatch("linear", x, w));
        }
        if tb.len() != tw.shape()[1] {
            return Err(self.mismatch("linear bias", w, b));
        }
        let mut out = matmul_fwd(tx, tw);
        add_rowwise(out.data_mut(), tb.data());
        Ok(self.push(out, Op::Linear(x, w, b), &[x, w, b]))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch("add", a, b));
        }
        let mut out = self.value(a).clone();
        for (o, v) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o += *v;
        }
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    /// Adds a vector of length `cols` to every row.
    pub fn add_bias(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(b).len() != self.value(a).cols() {
            return Err(self.mismatch("add_bias", a, b));
        }
        let mut out = self.value(a).clone();
        add_rowwise(out.data_mut(), self.value(b).data());
        Ok(self.push(out, Op::AddBias(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> NodeId {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= c);
        self.push(out, Op::Scale(a, c), &[a])
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
        self.push(out, Op::Relu(a), &[a])
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.exp());
        self.push(out, Op::Exp(a), &[a])
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.ln());
        self.push(out, Op::Log(a), &[a])
    }

    /// Row-wise softmax over the last dimension.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        let cols = out.cols();
        out.data_mut().chunks_mut(cols).for_each(softmax_in_place);
        self.push(out, Op::Softmax(a), &[a])
    }

    /// Row-wise log-softmax over the last dimension.
    pub fn log_softmax(&mut self, a: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        let cols = out.cols();
        for row in out.data_mut().chunks_mut(cols) {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
            row.iter_mut().for_each(|v| *v -= lse);
        }
        self.push(out, Op::LogSoftmax(a), &[a])
    }

    /// Layer normalization over the last dimension with learned gain and bias.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId, eps: f64) -> Result<NodeId> {
        let cols = self.value(x).cols();
        if self.value(gain).len() != cols {
            return Err(self.mismatch("layer_norm gain", x, gain));
        }
        if self.value(bias).len() != cols {
            return Err(self.mismatch("layer_norm bias", x, bias));
        }
        let eps = T::lit(eps);
        let n = T::lit(cols as f64);
        let mut out = self.value(x).clone();
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let mut rstd = Vec::with_capacity(out.rows());
        for row in out.data_mut().chunks_mut(cols) {
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let r = T::one() / (var + eps).sqrt();
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) * r * g[j] + b[j];
            }
            rstd.push(r);
        }
        Ok(self.push(out, Op::LayerNorm { x, gain, bias, rstd }, &[x, gain, bias]))
    }

    /// Inverted dropout. Identity when `p == 0` or in eval mode.
    pub fn dropout(&mut self, x: NodeId, p: f64) -> Result<NodeId> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout probability {p} not in [0, 1)")));
        }
        if !self.train || p == 0.0 {
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - p));
        let n = self.value(x).len();
        let mask: Vec<T> =
            (0..n).map(|_| if self.rng.random::<f64>() < p { T::zero() } else { keep }).collect();
        let mut out = self.value(x).clone();
        for (o, m) in out.data_mut().iter_mut().zip(&mask) {
            *o *= *m;
        }
        Ok(self.push(out, Op::Dropout { x, mask }, &[x]))
    }

    pub fn mean(&mut self, x: NodeId, axis: Axis) -> NodeId {
        let t = self.value(x);
        let (rows, cols) = (t.rows(), t.cols());
        let out = match axis {
            Axis::Rows => {
                let mut acc = vec![T::zero(); cols];
                for row in t.data().chunks(cols) {
                    for (a, v) in acc.iter_mut().zip(row) {
                        *a += *v;
                    }
                }
                let n = T::lit(rows as f64);
                acc.iter_mut().for_each(|a| *a /= n);
                Tensor { shape: vec![1, cols], data: acc }
            }
            Axis::Cols => {
                let n = T::lit(cols as f64);
                let data = t.data().chunks(cols).map(|r| r.iter().copied().sum::<T>() / n).collect();
                let mut shape = t.shape().to_vec();
                match shape.last_mut() {
                    Some(l) => *l = 1,
                    None => shape.push(1),
                }
                Tensor { shape, data }
            }
        };
        self.push(out, Op::Mean(x, axis), &[x])
    }

    /// Concatenates along the last dimension; all inputs need equal row counts.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(Error::InvalidArgument("concat of zero tensors".into()));
        };
        let rows = self.value(first).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(self.mismatch("concat", first, p));
            }
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                let t = self.value(p);
                let c = t.cols();
                data.extend_from_slice(&t.data()[r * c..(r + 1) * c]);
            }
        }
        let mut shape = self.shape(first).to_vec();
        match shape.last_mut() {
            Some(l) => *l = total,
            None => shape.push(total),
        }
        let out = Tensor { shape, data };
        Ok(self.push(out, Op::Concat(parts.to_vec()), parts))
    }

    /// 2-D transpose.
    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let t = self.value(x);
        if t.shape().len() != 2 {
            return Err(Error::Shape(format!("transpose needs 2-D, got {:?}", t.shape())));
        }
        let (r, c) = (t.shape()[0], t.shape()[1]);
        let mut data = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = t.data()[i * c + j];
            }
        }
        let out = Tensor { shape: vec![c, r], data };
        Ok(self.push(out, Op::Transpose(x), &[x]))
    }

    /// Multi-head scaled dot-product attention on already projected
    /// `q: [Tq, d]`, `k, v: [Tk, d]`. Head `h` uses columns
    /// `h*d/heads..(h+1)*d/heads`.
    pub fn attention(&mut self, q: NodeId, k: NodeId, v: NodeId, heads: usize) -> Result<NodeId> {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        let d = tq.cols();
        if tk.cols() != d || tv.cols() != d {
            return Err(self.mismatch("attention q/k", q, k).chain_shape(self.shape(v)));
        }
        if tk.rows() != tv.rows() {
            return Err(self.mismatch("attention k/v", k, v));
        }
        if heads == 0 || d % heads != 0 {
            return Err(Error::Shape(format!("attention: width {d} not divisible by {heads} heads")));
        }
        let (nq, nk, dk) = (tq.rows(), tk.rows(), d / heads);
        let scale = T::lit(1.0 / (dk as f64).sqrt());
        let mut probs = vec![T::zero(); heads * nq * nk];
        let mut out = vec![T::zero(); nq * d];
        for h in 0..heads {
            let off = h * dk;
            let p = &mut probs[h * nq * nk..(h + 1) * nq * nk];
            gemm(
                scale,
                View { data: &tq.data()[off..], rows: nq, cols: dk, rs: d, cs: 1 },
                View { data: &tk.data()[off..], rows: dk, cols: nk, rs: 1, cs: d },
                T::zero(),
                ViewMut::dense(p, nq, nk),
            );
            p.chunks_mut(nk).for_each(softmax_in_place);
            gemm(
                T::one(),
                View::dense(p, nq, nk),
                View { data: &tv.data()[off..], rows: nk, cols: dk, rs: d, cs: 1 },
                T::zero(),
                ViewMut { data: &mut out[off..], rows: nq, cols: dk, rs: d, cs: 1 },
            );
        }
        let out = Tensor { shape: vec![nq, d], data: out };
        Ok(self.push(out, Op::Sdpa { q, k, v, heads, probs }, &[q, k, v]))
    }

    /// Summed negative log-likelihood of row-wise probabilities. Rows with a
    /// `None` target contribute nothing.
    pub fn cross_entropy(&mut self, probs: NodeId, targets: &[Option<usize>]) -> Result<NodeId> {
        let t = self.value(probs);
        let (rows, cols) = (t.rows(), t.cols());
        if targets.len() != rows {
            return Err(Error::Shape(format!(
                "cross_entropy: probabilities {:?} vs {} targets",
                t.shape(),
                targets.len()
            )));
        }
        let floor = T::lit(CE_FLOOR);
        let mut loss = T::zero();
        for (r, tgt) in targets.iter().enumerate() {
            if let Some(c) = *tgt {
                if c >= cols {
                    return Err(Error::Shape(format!("cross_entropy: class {c} with {cols} columns")));
                }
                loss -= t.data()[r * cols + c].max(floor).ln();
            }
        }
        let out = Tensor::scalar(loss);
        Ok(self.push(out, Op::CrossEntropy { probs, targets: targets.to_vec() }, &[probs]))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).data().iter().copied().sum::<T>();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Divides every row by its Euclidean norm.
    pub fn l2_normalize_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let mut out = self.value(x).clone();
        let cols = out.cols();
        let mut norms = Vec::with_capacity(out.rows());
        for (r, row) in out.data_mut().chunks_mut(cols).enumerate() {
            let n = row.iter().map(|&v| v * v).sum::<T>().sqrt();
            if !(n > T::zero()) || !n.is_finite() {
                return Err(Error::Numerical(format!("row {r} has norm {n}")));
            }
            row.iter_mut().for_each(|v| *v /= n);
            norms.push(n);
        }
        Ok(self.push(out, Op::L2NormalizeRows { x, norms }, &[x]))
    }
}

trait ChainShape {
    fn chain_shape(self, s: &[usize]) -> Self;
}

impl ChainShape for Error {
    fn chain_shape(self, s: &[usize]) -> Self {
        match self {
            Error::Shape(m) => Error::Shape(format!("{m} (v {s:?})")),
            e => e,
        }
    }
}

pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    row.iter_mut().for_each(|v| *v -= max);
    T::exp_in_place(row);
    let sum: T = row.iter().copied().sum();
    let inv = T::one() / sum;
    row.iter_mut().for_each(|v| *v *= inv);
}

fn add_rowwise<T: Real>(data: &mut [T], b: &[T]) {
    for row in data.chunks_mut(b.len()) {
        for (o, v) in row.iter_mut().zip(b) {
            *o += *v;
        }
    }
}

fn matmul_fwd<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (m, k, n) = (a.rows(), a.cols(), b.shape()[1]);
    let mut data = vec![T::zero(); m * n];
    gemm(T::one(), View::dense(a.data(), m, k), View::dense(b.data(), k, n), T::zero(), ViewMut::dense(&mut data, m, n));
    let mut shape = a.shape().to_vec();
    match shape.last_mut() {
        Some(l) => *l = n,
        None => shape.push(n),
    }
    Tensor { shape, data }
}
