use crate::error::{Error, Result};
use crate::tensor::{gemm, Graph, NodeId, Real, View, ViewMut};

/// InfoNCE with cosine similarity over rows of `z` (anchors) and `zp`
/// (positives), both `[b x dim]` row-major:
/// `L = -(1/B) sum_i log( exp(s_ii / tau) / sum_j exp(s_ij / tau) )`.
/// The denominator runs over every positive including `j = i`.
pub fn info_nce(z: &[f64], zp: &[f64], b: usize, tau: f64) -> Result<f64> {
    check(z.len(), zp.len(), b, tau)?;
    let dim = z.len() / b;
    let zn = normalize_rows(z, dim)?;
    let zpn = normalize_rows(zp, dim)?;
    let mut s = vec![0.0; b * b];
    gemm(1.0 / tau, View::dense(&zn, b, dim), View::dense_t(&zpn, dim, b), 0.0, ViewMut::dense(&mut s, b, b));
    let mut total = 0.0;
    for (i, row) in s.chunks(b).enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        total += lse - row[i];
    }
    Ok(total / b as f64)
}

fn check(nz: usize, nzp: usize, b: usize, tau: f64) -> Result<()> {
    if b < 2 {
        return Err(Error::InvalidArgument(format!("InfoNCE needs a batch of at least 2, got {b}")));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    if nz != nzp || nz % b != 0 || nz == 0 {
        return Err(Error::Shape(format!("anchors of {nz} values and positives of {nzp} values for batch {b}")));
    }
    Ok(())
}

fn normalize_rows(x: &[f64], dim: usize) -> Result<Vec<f64>> {
    let mut out = x.to_vec();
    for (r, row) in out.chunks_mut(dim).enumerate() {
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Numerical(format!("embedding {r} has norm {n}")));
        }
        row.iter_mut().for_each(|v| *v /= n);
    }
    Ok(out)
}

/// Graph form of [`info_nce`] on `[B, dim]` nodes.
pub fn info_nce_graph<T: Real>(g: &mut Graph<T>, z: NodeId, zp: NodeId, tau: f64) -> Result<NodeId> {
    let b = g.value(z).rows();
    check(g.value(z).len(), g.value(zp).len(), b, tau)?;
    let zn = g.l2_normalize_rows(z)?;
    let zpn = g.l2_normalize_rows(zp)?;
    let zpt = g.transpose(zpn)?;
    let s = g.matmul(zn, zpt)?;
    let s = g.scale(s, T::lit(1.0 / tau));
    let p = g.softmax(s);
    let targets: Vec<Option<usize>> = (0..b).map(Some).collect();
    let ce = g.cross_entropy(p, &targets)?;
    Ok(g.scale(ce, T::lit(1.0 / b as f64)))
}
