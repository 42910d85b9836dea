use super::ParamStore;
use crate::error::{Error, Result};

/// Central finite differences against autodiff over every scalar parameter.
///
/// `f` evaluates the scalar loss and its autodiff gradient, one vector per
/// parameter in store order. Returns the largest
/// `|g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|)`.
pub fn grad_check<F>(params: &ParamStore<f64>, eps: f64, f: F) -> Result<f64>
where
    F: Fn(&ParamStore<f64>) -> Result<(f64, Vec<Vec<f64>>)>,
{
    grad_check_subset(params, eps, usize::MAX, f)
}

/// As [`grad_check`], but probes at most `max_per_param` evenly spaced
/// entries of each parameter tensor.
pub fn grad_check_subset<F>(params: &ParamStore<f64>, eps: f64, max_per_param: usize, f: F) -> Result<f64>
where
    F: Fn(&ParamStore<f64>) -> Result<(f64, Vec<Vec<f64>>)>,
{
    let (_, ad) = f(params)?;
    if ad.len() != params.len() {
        return Err(Error::Shape(format!("{} gradients for {} parameters", ad.len(), params.len())));
    }
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for (p, g) in ad.iter().enumerate() {
        let n = params.tensor(p).len();
        if g.len() != n {
            return Err(Error::Shape(format!("gradient of {} has {} entries, want {n}", params.name(p), g.len())));
        }
        if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("gradient of {} is {bad}", params.name(p))));
        }
        let step = n.div_ceil(max_per_param.max(1)).max(1);
        for j in (0..n).step_by(step) {
            let orig = params.tensor(p).data()[j];
            probe.tensor_mut(p).data_mut()[j] = orig + eps;
            let (lp, _) = f(&probe)?;
            probe.tensor_mut(p).data_mut()[j] = orig - eps;
            let (lm, _) = f(&probe)?;
            probe.tensor_mut(p).data_mut()[j] = orig;
            let fd = (lp - lm) / (2.0 * eps);
            if !fd.is_finite() {
                return Err(Error::Numerical(format!("finite difference of {} is {fd}", params.name(p))));
            }
            let err = (g[j] - fd).abs() / (g[j].abs() + fd.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
