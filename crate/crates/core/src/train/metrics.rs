use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ingest::Group;
use crate::model::Output;
use crate::windowing::{BilateralWindow, HierLabel};

/// Accuracy and macro-F1 of one classification head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Windows that carried a label for this head.
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreeClassMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Accuracy within each true class, in HC, PD, DD order.
    pub per_class_accuracy: [f64; 3],
    pub n: usize,
}

/// Subject-level accuracy from a per-head majority vote over windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectMajority {
    pub head1_accuracy: Option<f64>,
    pub head2_accuracy: Option<f64>,
    pub three_class_accuracy: Option<f64>,
    pub subjects: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head1: Option<HeadMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head2: Option<HeadMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub three_class: Option<ThreeClassMetrics>,
    pub subject_majority: SubjectMajority,
}

impl EvalMetrics {
    /// Mean head accuracy (hierarchical) or plain accuracy (three-class).
    pub fn accuracy(&self) -> f64 {
        match (&self.head1, &self.head2, &self.three_class) {
            (_, _, Some(t)) => t.accuracy,
            (Some(a), Some(b), None) => (a.accuracy + b.accuracy) / 2.0,
            (Some(a), None, None) | (None, Some(a), None) => a.accuracy,
            (None, None, None) => 0.0,
        }
    }

    /// Smallest per-head accuracy.
    pub fn min_head_accuracy(&self) -> f64 {
        match (&self.head1, &self.head2, &self.three_class) {
            (_, _, Some(t)) => t.accuracy,
            (a, b, None) => a.iter().chain(b.iter()).map(|h| h.accuracy).fold(f64::INFINITY, f64::min),
        }
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

/// Accuracy and macro-F1 over `(truth, prediction)` pairs with `k` classes.
/// Classes absent from both truth and predictions are left out of the
/// macro average.
pub fn classification_metrics(pairs: &[(usize, usize)], k: usize) -> (f64, f64) {
    if pairs.is_empty() {
        return (0.0, 0.0);
    }
    let correct = pairs.iter().filter(|(t, p)| t == p).count();
    let mut f1s = Vec::new();
    for c in 0..k {
        let tp = pairs.iter().filter(|(t, p)| *t == c && *p == c).count();
        let fp = pairs.iter().filter(|(t, p)| *t != c && *p == c).count();
        let fn_ = pairs.iter().filter(|(t, p)| *t == c && *p != c).count();
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            f1s.push(2.0 * tp as f64 / denom as f64);
        }
    }
    let f1 = if f1s.is_empty() { 0.0 } else { f1s.iter().sum::<f64>() / f1s.len() as f64 };
    (correct as f64 / pairs.len() as f64, f1)
}

fn head_metrics(pairs: &[(usize, usize)]) -> Option<HeadMetrics> {
    if pairs.is_empty() {
        return None;
    }
    let (accuracy, macro_f1) = classification_metrics(pairs, 2);
    Some(HeadMetrics { accuracy, macro_f1, n: pairs.len() })
}

fn majority(votes: &[usize], k: usize) -> usize {
    let mut counts = vec![0usize; k];
    for &v in votes {
        counts[v] += 1;
    }
    // Ties go to the lower class index.
    let mut best = 0;
    for (i, c) in counts.iter().enumerate() {
        if *c > counts[best] {
            best = i;
        }
    }
    best
}

/// Window-level metrics. Head 1 is scored only on HC and PD windows, head 2
/// only on PD and DD windows.
pub fn evaluate_outputs(outputs: &[Output], labels: &[HierLabel], windows: &[BilateralWindow]) -> EvalMetrics {
    let mut h1 = Vec::new();
    let mut h2 = Vec::new();
    let mut three = Vec::new();
    // subject -> (per-head votes, truth)
    let mut votes: BTreeMap<&str, [Vec<usize>; 3]> = BTreeMap::new();
    let mut truth: BTreeMap<&str, (HierLabel, Option<Group>)> = BTreeMap::new();
    for ((out, label), w) in outputs.iter().zip(labels).zip(windows) {
        let entry = votes.entry(w.subject_id.as_str()).or_default();
        truth.insert(w.subject_id.as_str(), (*label, label.group()));
        match out {
            Output::Hierarchical { p1, p2 } => {
                let (a, b) = (argmax(p1), argmax(p2));
                if let Some(t) = label.hc_pd.class() {
                    h1.push((t, a));
                    entry[0].push(a);
                }
                if let Some(t) = label.pd_dd.class() {
                    h2.push((t, b));
                    entry[1].push(b);
                }
            }
            Output::ThreeClass { p } => {
                if let Some(g) = label.group() {
                    let pred = argmax(p);
                    three.push((g.index(), pred));
                    entry[2].push(pred);
                }
            }
        }
    }

    let mut subject_pairs: [Vec<(usize, usize)>; 3] = Default::default();
    for (subject, v) in &votes {
        let (label, group) = truth[subject];
        if let Some(t) = label.hc_pd.class().filter(|_| !v[0].is_empty()) {
            subject_pairs[0].push((t, majority(&v[0], 2)));
        }
        if let Some(t) = label.pd_dd.class().filter(|_| !v[1].is_empty()) {
            subject_pairs[1].push((t, majority(&v[1], 2)));
        }
        if let Some(g) = group.filter(|_| !v[2].is_empty()) {
            subject_pairs[2].push((g.index(), majority(&v[2], 3)));
        }
    }
    let subj_acc = |pairs: &[(usize, usize)]| {
        (!pairs.is_empty()).then(|| pairs.iter().filter(|(t, p)| t == p).count() as f64 / pairs.len() as f64)
    };
    let subject_majority = SubjectMajority {
        head1_accuracy: subj_acc(&subject_pairs[0]),
        head2_accuracy: subj_acc(&subject_pairs[1]),
        three_class_accuracy: subj_acc(&subject_pairs[2]),
        subjects: votes.len(),
    };

    let three_class = (!three.is_empty()).then(|| {
        let (accuracy, macro_f1) = classification_metrics(&three, 3);
        let mut per_class = [0.0; 3];
        for (c, slot) in per_class.iter_mut().enumerate() {
            let of_class: Vec<_> = three.iter().filter(|(t, _)| *t == c).collect();
            if !of_class.is_empty() {
                *slot = of_class.iter().filter(|(t, p)| t == p).count() as f64 / of_class.len() as f64;
            }
        }
        ThreeClassMetrics { accuracy, macro_f1, per_class_accuracy: per_class, n: three.len() }
    });
    EvalMetrics { head1: head_metrics(&h1), head2: head_metrics(&h2), three_class, subject_majority }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_metrics_by_hand() {
        // truth 0,0,1,1 ; pred 0,1,1,1 -> acc 0.75; F1(0)=2/3, F1(1)=0.8
        let pairs = [(0, 0), (0, 1), (1, 1), (1, 1)];
        let (acc, f1) = classification_metrics(&pairs, 2);
        assert_eq!(acc, 0.75);
        assert!((f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
