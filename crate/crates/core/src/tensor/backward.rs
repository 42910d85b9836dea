use super::gemm::{gemm, View, ViewMut};
use super::graph::{Axis, Graph, NodeId, Op, CE_FLOOR};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Gradients of one backward pass, indexed by node.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    params: Vec<(usize, NodeId)>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, id: NodeId) -> Option<&[T]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// `(parameter index, gradient)` for every bound trainable parameter that
    /// received a gradient. A parameter bound more than once is summed.
    pub fn param_grads(&self) -> Vec<(usize, Vec<T>)> {
        let mut out: Vec<(usize, Vec<T>)> = Vec::new();
        for &(idx, node) in &self.params {
            let Some(g) = self.get(node) else { continue };
            match out.iter_mut().find(|(i, _)| *i == idx) {
                Some((_, acc)) => acc.iter_mut().zip(g).for_each(|(a, v)| *a += *v),
                None => out.push((idx, g.to_vec())),
            }
        }
        out.sort_by_key(|(i, _)| *i);
        out
    }
}

fn slot<'a, T: Real>(grads: &'a mut [Option<Vec<T>>], id: NodeId, len: usize) -> &'a mut Vec<T> {
    grads[id.0].get_or_insert_with(|| vec![T::zero(); len])
}

impl<T: Real> Graph<T> {
    /// Reverse pass from `root`. The seed defaults to ones (`d root / d root`).
    pub fn backward(&self, root: NodeId, seed: Option<&[T]>) -> Result<Gradients<T>> {
        let n_root = self.nodes[root.0].value.len();
        let seed = match seed {
            Some(s) if s.len() != n_root => {
                return Err(Error::Shape(format!("backward seed length {} vs root {n_root}", s.len())))
            }
            Some(s) => s.to_vec(),
            None => vec![T::one(); n_root],
        };
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(seed);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("non-finite gradient at node {i}")));
            }
            self.backprop_node(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(idx) => Some((idx, NodeId(i))),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads, params })
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn val(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    fn backprop_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => self.matmul_back(*a, *b, g, grads),
            Op::Linear(x, w, b) => {
                self.matmul_back(*x, *w, g, grads);
                if self.wants(*b) {
                    let n = self.val(*b).len();
                    col_sum_into(slot(grads, *b, n), g);
                }
            }
            Op::Add(a, b) => {
                for id in [*a, *b] {
                    if self.wants(id) {
                        add_into(slot(grads, id, g.len()), g);
                    }
                }
            }
            Op::AddBias(a, b) => {
                if self.wants(*a) {
                    add_into(slot(grads, *a, g.len()), g);
                }
                if self.wants(*b) {
                    let n = self.val(*b).len();
                    col_sum_into(slot(grads, *b, n), g);
                }
            }
            Op::Scale(a, c) => {
                let dst = slot(grads, *a, g.len());
                dst.iter_mut().zip(g).for_each(|(d, v)| *d += *c * *v);
            }
            Op::Relu(a) => {
                let x = self.val(*a).data();
                let dst = slot(grads, *a, g.len());
                for ((d, v), xv) in dst.iter_mut().zip(g).zip(x) {
                    if *xv > T::zero() {
                        *d += *v;
                    }
                }
            }
            Op::Exp(a) => {
                let dst = slot(grads, *a, g.len());
                for ((d, v), yv) in dst.iter_mut().zip(g).zip(y.data()) {
                    *d += *v * *yv;
                }
            }
            Op::Log(a) => {
                let x = self.val(*a).data();
                let dst = slot(grads, *a, g.len());
                for ((d, v), xv) in dst.iter_mut().zip(g).zip(x) {
                    *d += *v / *xv;
                }
            }
            Op::Softmax(a) => {
                let cols = y.cols();
                let dst = slot(grads, *a, g.len());
                for ((d, gr), yr) in dst.chunks_mut(cols).zip(g.chunks(cols)).zip(y.data().chunks(cols)) {
                    let dot: T = gr.iter().zip(yr).map(|(a, b)| *a * *b).sum();
                    for j in 0..cols {
                        d[j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let cols = y.cols();
                let dst = slot(grads, *a, g.len());
                for ((d, gr), yr) in dst.chunks_mut(cols).zip(g.chunks(cols)).zip(y.data().chunks(cols)) {
                    let s: T = gr.iter().copied().sum();
                    for j in 0..cols {
                        d[j] += gr[j] - yr[j].exp() * s;
                    }
                }
            }
            Op::LayerNorm { x, gain, bias, rstd } => self.layer_norm_back(*x, *gain, *bias, rstd, g, grads),
            Op::Dropout { x, mask } => {
                let dst = slot(grads, *x, g.len());
                for ((d, v), m) in dst.iter_mut().zip(g).zip(mask) {
                    *d += *v * *m;
                }
            }
            Op::Mean(x, axis) => {
                let t = self.val(*x);
                let (rows, cols) = (t.rows(), t.cols());
                let dst = slot(grads, *x, t.len());
                match axis {
                    Axis::Rows => {
                        let n = T::lit(rows as f64);
                        for row in dst.chunks_mut(cols) {
                            for (d, v) in row.iter_mut().zip(g) {
                                *d += *v / n;
                            }
                        }
                    }
                    Axis::Cols => {
                        let n = T::lit(cols as f64);
                        for (row, v) in dst.chunks_mut(cols).zip(g) {
                            row.iter_mut().for_each(|d| *d += *v / n);
                        }
                    }
                }
            }
            Op::Concat(parts) => {
                let total = y.cols();
                let mut off = 0;
                for &p in parts {
                    let t = self.val(p);
                    let c = t.cols();
                    if self.wants(p) {
                        let dst = slot(grads, p, t.len());
                        for (r, row) in dst.chunks_mut(c).enumerate() {
                            let src = &g[r * total + off..r * total + off + c];
                            add_into(row, src);
                        }
                    }
                    off += c;
                }
            }
            Op::Transpose(x) => {
                let (r, c) = (y.shape()[0], y.shape()[1]);
                let dst = slot(grads, *x, g.len());
                for i in 0..r {
                    for j in 0..c {
                        dst[j * r + i] += g[i * c + j];
                    }
                }
            }
            Op::Sdpa { q, k, v, heads, probs } => self.attention_back(*q, *k, *v, *heads, probs, g, grads),
            Op::CrossEntropy { probs, targets } => {
                let t = self.val(*probs);
                let cols = t.cols();
                let floor = T::lit(CE_FLOOR);
                let dst = slot(grads, *probs, t.len());
                for (r, tgt) in targets.iter().enumerate() {
                    if let Some(c) = *tgt {
                        let p = t.data()[r * cols + c];
                        if p > floor {
                            dst[r * cols + c] -= g[0] / p;
                        }
                    }
                }
            }
            Op::Sum(x) => {
                let n = self.val(*x).len();
                slot(grads, *x, n).iter_mut().for_each(|d| *d += g[0]);
            }
            Op::L2NormalizeRows { x, norms } => {
                let cols = y.cols();
                let dst = slot(grads, *x, g.len());
                for (((d, gr), yr), n) in
                    dst.chunks_mut(cols).zip(g.chunks(cols)).zip(y.data().chunks(cols)).zip(norms)
                {
                    let dot: T = gr.iter().zip(yr).map(|(a, b)| *a * *b).sum();
                    for j in 0..cols {
                        d[j] += (gr[j] - yr[j] * dot) / *n;
                    }
                }
            }
        }
        Ok(())
    }

    fn matmul_back(&self, a: NodeId, b: NodeId, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let (ta, tb) = (self.val(a), self.val(b));
        let (m, k, n) = (ta.rows(), ta.cols(), tb.shape()[1]);
        if self.wants(a) {
            let dst = slot(grads, a, m * k);
            gemm(T::one(), View::dense(g, m, n), View::dense_t(tb.data(), n, k), T::one(), ViewMut::dense(dst, m, k));
        }
        if self.wants(b) {
            let dst = slot(grads, b, k * n);
            gemm(T::one(), View::dense_t(ta.data(), k, m), View::dense(g, m, n), T::one(), ViewMut::dense(dst, k, n));
        }
    }

    fn layer_norm_back(
        &self,
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        rstd: &[T],
        g: &[T],
        grads: &mut [Option<Vec<T>>],
    ) {
        let tx = self.val(x);
        let cols = tx.cols();
        let n = T::lit(cols as f64);
        let gv = self.val(gain).data();
        let mut xhat = vec![T::zero(); cols];
        let mut dgain = vec![T::zero(); cols];
        let mut dbias = vec![T::zero(); cols];
        let mut dx = if self.wants(x) { Some(vec![T::zero(); tx.len()]) } else { None };
        for (r, (xr, gr)) in tx.data().chunks(cols).zip(g.chunks(cols)).enumerate() {
            let mean = xr.iter().copied().sum::<T>() / n;
            let rs = rstd[r];
            for j in 0..cols {
                xhat[j] = (xr[j] - mean) * rs;
                dgain[j] += gr[j] * xhat[j];
                dbias[j] += gr[j];
            }
            if let Some(dx) = dx.as_mut() {
                // dxhat = g * gain; dx = rstd * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
                let mut s1 = T::zero();
                let mut s2 = T::zero();
                for j in 0..cols {
                    let dh = gr[j] * gv[j];
                    s1 += dh;
                    s2 += dh * xhat[j];
                }
                let (m1, m2) = (s1 / n, s2 / n);
                let row = &mut dx[r * cols..(r + 1) * cols];
                for j in 0..cols {
                    row[j] = rs * (gr[j] * gv[j] - m1 - xhat[j] * m2);
                }
            }
        }
        if let Some(dx) = dx {
            add_into(slot(grads, x, dx.len()), &dx);
        }
        if self.wants(gain) {
            add_into(slot(grads, gain, cols), &dgain);
        }
        if self.wants(bias) {
            add_into(slot(grads, bias, cols), &dbias);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_back(
        &self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        heads: usize,
        probs: &[T],
        g: &[T],
        grads: &mut [Option<Vec<T>>],
    ) {
        let (tq, tk, tv) = (self.val(q), self.val(k), self.val(v));
        let d = tq.cols();
        let (nq, nk, dk) = (tq.rows(), tk.rows(), d / heads);
        let scale = T::lit(1.0 / (dk as f64).sqrt());
        let mut dq = vec![T::zero(); nq * d];
        let mut dkm = vec![T::zero(); nk * d];
        let mut dv = vec![T::zero(); nk * d];
        let mut ds = vec![T::zero(); nq * nk];
        for h in 0..heads {
            let off = h * dk;
            let p = &probs[h * nq * nk..(h + 1) * nq * nk];
            let go = View { data: &g[off..], rows: nq, cols: dk, rs: d, cs: 1 };
            // dV += P^T dO
            gemm(
                T::one(),
                View::dense_t(p, nk, nq),
                go,
                T::one(),
                ViewMut { data: &mut dv[off..], rows: nk, cols: dk, rs: d, cs: 1 },
            );
            // dP = dO V^T
            gemm(
                T::one(),
                go,
                View { data: &tv.data()[off..], rows: dk, cols: nk, rs: 1, cs: d },
                T::zero(),
                ViewMut::dense(&mut ds, nq, nk),
            );
            for (dr, pr) in ds.chunks_mut(nk).zip(p.chunks(nk)) {
                let dot: T = dr.iter().zip(pr).map(|(a, b)| *a * *b).sum();
                for j in 0..nk {
                    dr[j] = pr[j] * (dr[j] - dot);
                }
            }
            // dQ += scale dS K, dK += scale dS^T Q
            gemm(
                scale,
                View::dense(&ds, nq, nk),
                View { data: &tk.data()[off..], rows: nk, cols: dk, rs: d, cs: 1 },
                T::one(),
                ViewMut { data: &mut dq[off..], rows: nq, cols: dk, rs: d, cs: 1 },
            );
            gemm(
                scale,
                View::dense_t(&ds, nk, nq),
                View { data: &tq.data()[off..], rows: nq, cols: dk, rs: d, cs: 1 },
                T::one(),
                ViewMut { data: &mut dkm[off..], rows: nk, cols: dk, rs: d, cs: 1 },
            );
        }
        for (id, buf) in [(q, dq), (k, dkm), (v, dv)] {
            if self.wants(id) {
                add_into(slot(grads, id, buf.len()), &buf);
            }
        }
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += *s);
}

fn col_sum_into<T: Real>(dst: &mut [T], g: &[T]) {
    for row in g.chunks(dst.len()) {
        add_into(dst, row);
    }
}
