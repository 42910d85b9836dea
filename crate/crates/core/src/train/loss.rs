use crate::error::Result;
use crate::tensor::{Graph, NodeId, Real};
use crate::windowing::HierLabel;

/// Probability floor inside the logarithm, shared with the graph op.
pub const PROB_FLOOR: f64 = 1e-12;

/// `-ln p`, clamped away from zero.
pub fn nll(p: f64) -> f64 {
    -p.max(PROB_FLOOR).ln()
}

/// Number of unmasked `(sample, head)` terms.
pub fn active_terms(labels: &[HierLabel]) -> usize {
    labels.iter().map(|l| l.heads().iter().filter(|h| h.class().is_some()).count()).sum()
}

/// Masked hierarchical cross-entropy on probabilities: the mean of
/// `-ln p[true]` over all unmasked `(sample, head)` pairs, pooled across both
/// heads. Zero when every term is masked.
pub fn masked_ce(p1: &[[f64; 2]], p2: &[[f64; 2]], labels: &[HierLabel]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((a, b), l) in p1.iter().zip(p2).zip(labels) {
        for (p, head) in [(a, l.hc_pd), (b, l.pd_dd)] {
            if let Some(c) = head.class() {
                sum += nll(p[c]);
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Graph form of [`masked_ce`] on batched probability nodes `[B, 2]`.
/// Returns `None` when every term is masked.
pub fn masked_ce_graph<T: Real>(
    g: &mut Graph<T>,
    p1: NodeId,
    p2: NodeId,
    labels: &[HierLabel],
) -> Result<Option<NodeId>> {
    let n = active_terms(labels);
    if n == 0 {
        return Ok(None);
    }
    let t1: Vec<Option<usize>> = labels.iter().map(|l| l.hc_pd.class()).collect();
    let t2: Vec<Option<usize>> = labels.iter().map(|l| l.pd_dd.class()).collect();
    let a = g.cross_entropy(p1, &t1)?;
    let b = g.cross_entropy(p2, &t2)?;
    let s = g.add(a, b)?;
    Ok(Some(g.scale(s, T::lit(1.0 / n as f64))))
}
