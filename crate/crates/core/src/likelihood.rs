//! Log-likelihood ratios, score and angle bracket, and the LAN remainder,
//! evaluated on the stored Brownian increments of a simulated path.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{local_scale, InfoMatrix, ModelParams};
use crate::path::{channel, SamplePath};
use crate::quadrature::{increment_sum, trapezoid_by};

/// Score `S_{n,θ}(t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreVector {
    pub entries: Vec<f64>,
    pub t: f64,
}

impl ScoreVector {
    pub fn dot(&self, h: &[f64]) -> f64 {
        self.entries.iter().zip(h).map(|(s, x)| s * x).sum()
    }
}

fn check_pair(theta_prime: &ModelParams, theta: &ModelParams) -> Result<()> {
    if theta_prime.c != theta.c {
        return Err(Error::DiffusionMismatch(theta_prime.c, theta.c));
    }
    if !(theta.c > 0.0) {
        return Err(Error::InvalidParameter("likelihood ratios need c > 0".into()));
    }
    if theta_prime.degree() != theta.degree() {
        return Err(Error::InvalidParameter(format!(
            "trend degrees differ ({} vs {})",
            theta_prime.degree(),
            theta.degree()
        )));
    }
    Ok(())
}

/// Number of grid nodes covering `[0, horizon]`.
fn nodes_for(path: &SamplePath, horizon: f64) -> Result<usize> {
    let steps = (horizon / path.delta()).round();
    if !(steps >= 1.0 && steps as usize <= path.steps()) {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} is not covered by a path of length {}",
            path.horizon()
        )));
    }
    Ok(steps as usize + 1)
}

/// `log L^{θ'/θ}` on `[0, horizon]`:
/// `(1/√c) Σ_k g(t_k) ΔW_k - (1/2c) ∫ g² ds` with
/// `g = (R'_{ϑ'} - R'_ϑ) + τ(R_{ϑ'} - R_ϑ) - (τ' - τ)X + (τ' - τ)(R_{ϑ'} - R_ϑ)`
/// and `X = Y - R_ϑ`.
pub fn log_likelihood_ratio(
    path: &SamplePath,
    theta_prime: &ModelParams,
    theta: &ModelParams,
    horizon: f64,
) -> Result<f64> {
    check_pair(theta_prime, theta)?;
    let len = nodes_for(path, horizon)?;
    let y = path.channel(channel::Y)?;
    let dw = path.channel(channel::DW)?;
    let dtau = theta_prime.tau - theta.tau;
    let delta = path.delta();
    let g: Vec<f64> = (0..len)
        .map(|k| {
            let t = k as f64 * delta;
            let r = theta.eval_trend(t);
            let d = theta_prime.eval_trend(t) - r;
            let dd = theta_prime.trend.derivative(t) - theta.trend.derivative(t);
            dd + theta.tau * d - dtau * (y[k] - r) + dtau * d
        })
        .collect();
    let c = theta.c;
    let stochastic = increment_sum(len, dw, |k| g[k]);
    let quadratic = trapezoid_by(len, delta, |k| g[k] * g[k]);
    Ok(stochastic / c.sqrt() - quadratic / (2.0 * c))
}

/// Coefficients of `b_0(u) = τ`, `b_j(u) = τu^j + (j/n)u^{j-1}`.
fn basis(p: usize, tau: f64, n: f64) -> Vec<Vec<f64>> {
    (0..=p)
        .map(|j| {
            let mut b = vec![0.0; j + 1];
            b[j] = tau;
            if j > 0 {
                b[j - 1] = j as f64 / n;
            }
            b
        })
        .collect()
}

fn poly_at(coeffs: &[f64], u: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, a| acc * u + a)
}

/// `∫_0^t a(u) b(u) du` for polynomials given by coefficients.
fn product_integral(a: &[f64], b: &[f64], t: f64) -> f64 {
    let mut sum = 0.0;
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            let k = (i + j + 1) as i32;
            sum += ai * bj * t.powi(k) / k as f64;
        }
    }
    sum
}

/// Score `S_{n,θ}(t)` and angle bracket `J_{n,θ}(t)` on `[0, tn]`.
///
/// With `u = s/n`, the trend entries of the score are
/// `(1/√c) n^{-1/2} ∫ b_j(s/n) dW_s` and the last entry is
/// `-(1/√c) n^{-1/2} ∫ X_s dW_s`. The trend block of `cJ` is integrated
/// exactly; the entries involving `X` use the trapezoid rule.
pub fn score_and_bracket(path: &SamplePath, theta: &ModelParams, n: f64, t: f64) -> Result<(ScoreVector, InfoMatrix)> {
    if !(theta.c > 0.0) {
        return Err(Error::InvalidParameter("the score needs c > 0".into()));
    }
    if !(n > 0.0 && (0.0..=1.0).contains(&t)) {
        return Err(Error::InvalidParameter(format!("need n > 0 and t in [0, 1], got n={n}, t={t}")));
    }
    let p = theta.degree();
    let delta = path.delta();
    let len = if t == 0.0 { 1 } else { nodes_for(path, t * n)? };
    let y = path.channel(channel::Y)?;
    let dw = path.channel(channel::DW)?;
    let x: Vec<f64> = (0..len).map(|k| y[k] - theta.eval_trend(k as f64 * delta)).collect();
    let b = basis(p, theta.tau, n);
    let inv_root_n = n.sqrt().recip();
    let inv_root_c = theta.c.sqrt().recip();

    let mut score = Vec::with_capacity(p + 2);
    for bj in &b {
        let s = increment_sum(len, dw, |k| poly_at(bj, k as f64 * delta / n));
        score.push(inv_root_c * inv_root_n * s);
    }
    score.push(-inv_root_c * inv_root_n * increment_sum(len, dw, |k| x[k]));

    let d = p + 2;
    let mut cj = DMatrix::zeros(d, d);
    for i in 0..=p {
        for j in 0..=i {
            let v = product_integral(&b[i], &b[j], t);
            cj[(i, j)] = v;
            cj[(j, i)] = v;
        }
        let cross = -trapezoid_by(len, delta, |k| poly_at(&b[i], k as f64 * delta / n) * x[k]) / n;
        cj[(i, p + 1)] = cross;
        cj[(p + 1, i)] = cross;
    }
    cj[(p + 1, p + 1)] = trapezoid_by(len, delta, |k| x[k] * x[k]) / n;
    let info = InfoMatrix::new(cj / theta.c)?;
    Ok((ScoreVector { entries: score, t }, info))
}

/// `ρ = log L^{θ+ψ_n h / θ}(tn) - (hᵀS_{n,θ}(t) - ½ hᵀJ_{n,θ}(t) h)`.
pub fn lan_remainder(path: &SamplePath, theta: &ModelParams, h: &[f64], n: f64, t: f64) -> Result<f64> {
    if h.len() != theta.dim() {
        return Err(Error::InvalidParameter(format!(
            "direction has {} entries, expected {}",
            h.len(),
            theta.dim()
        )));
    }
    if h.iter().all(|x| *x == 0.0) {
        return Ok(0.0);
    }
    let scale = local_scale(theta.degree(), n)?;
    let step = scale.apply(h);
    let shifted: Vec<f64> = theta.theta().iter().zip(&step).map(|(a, b)| a + b).collect();
    let theta_prime = theta.with_theta(&shifted)?;
    let log_l = log_likelihood_ratio(path, &theta_prime, theta, t * n)?;
    let (score, info) = score_and_bracket(path, theta, n, t)?;
    Ok(log_l - (score.dot(h) - 0.5 * info.quadratic_form(h)))
}
