//! Grid integrals: trapezoid rule for `ds` integrals, left-endpoint sums for
//! stochastic integrals.

use crate::error::{Error, Result};

/// Trapezoid rule for `∫ f ds` over the first `len` grid nodes, `f` given by index.
pub fn trapezoid_by(len: usize, delta: f64, mut f: impl FnMut(usize) -> f64) -> f64 {
    if len < 2 {
        return 0.0;
    }
    let mut sum = 0.5 * (f(0) + f(len - 1));
    for k in 1..len - 1 {
        sum += f(k);
    }
    sum * delta
}

pub fn trapezoid(values: &[f64], delta: f64) -> f64 {
    trapezoid_by(values.len(), delta, |k| values[k])
}

/// Running trapezoid integral, starting at zero.
pub fn cumulative_trapezoid(values: &[f64], delta: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(acc);
    for w in values.windows(2) {
        acc += 0.5 * delta * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Itô sum `Σ_k g_k (Z_{k+1} - Z_k)`.
pub fn left_sum(integrand: &[f64], integrator: &[f64]) -> Result<f64> {
    if integrand.len() != integrator.len() {
        return Err(Error::GridMismatch(format!(
            "integrand has {} nodes, integrator {}",
            integrand.len(),
            integrator.len()
        )));
    }
    Ok(integrand
        .iter()
        .zip(integrator.windows(2))
        .map(|(g, z)| g * (z[1] - z[0]))
        .sum())
}

/// `Σ_k g_k ΔW_k` where `increments[k]` already holds `W_{k+1} - W_k`.
pub fn increment_sum(len: usize, increments: &[f64], mut g: impl FnMut(usize) -> f64) -> f64 {
    (0..len - 1).map(|k| g(k) * increments[k]).sum()
}
