#![allow(dead_code)]
//! Independent oracles shared by several test targets.

use std::f64::consts::PI;

use pdwrist::dsp::SosFilter;
use pdwrist::tensor::{Graph, NodeId, Real};

/// `|H(f)|` evaluated directly from the section polynomials.
pub fn magnitude(filter: &SosFilter, f_hz: f64) -> f64 {
    let w = 2.0 * PI * f_hz / 64.0;
    filter
        .sections
        .iter()
        .map(|s| {
            let eval = |c0: f64, c1: f64, c2: f64| {
                let re = c0 + c1 * w.cos() + c2 * (2.0 * w).cos();
                let im = -c1 * w.sin() - c2 * (2.0 * w).sin();
                (re * re + im * im).sqrt()
            };
            eval(s[0], s[1], s[2]) / eval(s[3], s[4], s[5])
        })
        .product()
}

/// First `n` impulse-response samples of the cascade, direct form I.
pub fn impulse_response(filter: &SosFilter, n: usize) -> Vec<f64> {
    let mut x: Vec<f64> = (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
    for s in &filter.sections {
        let mut y = vec![0.0; n];
        for i in 0..n {
            let at = |v: &[f64], k: usize| if i >= k { v[i - k] } else { 0.0 };
            y[i] = s[0] * x[i] + s[1] * at(&x, 1) + s[2] * at(&x, 2) - s[4] * at(&y, 1) - s[5] * at(&y, 2);
        }
        x = y;
    }
    x
}

/// One pass started in the steady state of the constant signal `x[0]`:
/// convolution with the impulse response plus the tail of that constant.
pub fn steady_pass(h: &[f64], dc_gain: f64, x: &[f64]) -> Vec<f64> {
    let x0 = x[0];
    let mut partial = 0.0;
    (0..x.len())
        .map(|n| {
            partial += h[n];
            let conv: f64 = (0..=n).map(|k| h[k] * x[n - k]).sum();
            conv + x0 * (dc_gain - partial)
        })
        .collect()
}

pub fn double_pass_oracle(filter: &SosFilter, x: &[f64]) -> Vec<f64> {
    let pad = 30;
    let n = x.len();
    let mut ext: Vec<f64> = (1..=pad).rev().map(|i| 2.0 * x[0] - x[i]).collect();
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    let h = impulse_response(filter, ext.len());
    let dc: f64 = filter.sections.iter().map(|s| (s[0] + s[1] + s[2]) / (1.0 + s[4] + s[5])).product();
    let mut y = steady_pass(&h, dc, &ext);
    y.reverse();
    let mut y = steady_pass(&h, dc, &y);
    y.reverse();
    y[pad..pad + n].to_vec()
}

/// InfoNCE as a plain double loop over cosine similarities.
pub fn brute_force_nce(z: &[f64], zp: &[f64], b: usize, tau: f64) -> f64 {
    let d = z.len() / b;
    let unit = |v: &[f64]| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect::<Vec<_>>()
    };
    let za: Vec<Vec<f64>> = z.chunks(d).map(unit).collect();
    let zb: Vec<Vec<f64>> = zp.chunks(d).map(unit).collect();
    let mut total = 0.0;
    for i in 0..b {
        let sim = |j: usize| za[i].iter().zip(&zb[j]).map(|(a, c)| a * c).sum::<f64>() / tau;
        let denom: f64 = (0..b).map(|j| sim(j).exp()).sum();
        total += -(sim(i).exp() / denom).ln();
    }
    total / b as f64
}

/// Stacks `[1 x k]` rows into `[n x k]`; `concat` joins columns.
pub fn stack_rows<T: Real>(g: &mut Graph<T>, rows: &[NodeId]) -> NodeId {
    let cols: Vec<_> = rows.iter().map(|&r| g.transpose(r).unwrap()).collect();
    let wide = g.concat(&cols).unwrap();
    g.transpose(wide).unwrap()
}
