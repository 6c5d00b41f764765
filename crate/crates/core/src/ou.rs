//! Exact-transition simulation of the Ornstein-Uhlenbeck noise and of the
//! observed process `Y = R_ϑ + X`.
//!
//! Each step draws two standard normals `(ξ₁, ξ₂)`. The first drives the
//! exact Gaussian transition
//! `X_{k+1} = e^{-τΔ} X_k + √(c (1 - e^{-2τΔ}) / (2τ)) ξ₁`;
//! together with the second it yields the Brownian increment `ΔW_k` with the
//! exact joint law of `(∫ e^{-τ(Δ-u)} dW_u, W_Δ)`, so `X` and `W` live on one
//! probability space and `ΔW_k` is independent of the past.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::path::{channel, step_count, SamplePath};
use crate::rng::RngSpec;

/// One-step law of the OU process on a grid of step `delta`.
#[derive(Debug, Clone, Copy)]
pub struct OuTransition {
    decay: f64,
    noise_sd: f64,
    sqrt_delta: f64,
    rho: f64,
    rho_c: f64,
}

impl OuTransition {
    pub fn new(tau: f64, c: f64, delta: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be positive and finite, got {tau}")));
        }
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::InvalidParameter(format!("c must be nonnegative and finite, got {c}")));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidParameter(format!("delta must be positive and finite, got {delta}")));
        }
        let conv_var = -(-2.0 * tau * delta).exp_m1() / (2.0 * tau);
        let cross = -(-tau * delta).exp_m1() / tau;
        let rho = (cross / (conv_var * delta).sqrt()).min(1.0);
        Ok(Self {
            decay: (-tau * delta).exp(),
            noise_sd: (c * conv_var).sqrt(),
            sqrt_delta: delta.sqrt(),
            rho,
            rho_c: (1.0 - rho * rho).max(0.0).sqrt(),
        })
    }

    /// Conditional mean of `X_{k+1}` given `X_k = x`.
    pub fn mean(&self, x: f64) -> f64 {
        self.decay * x
    }

    /// Conditional variance of `X_{k+1}`.
    pub fn variance(&self) -> f64 {
        self.noise_sd * self.noise_sd
    }

    /// Advances `x` by one step; returns the new state and `ΔW`.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> (f64, f64) {
        let xi1: f64 = rng.sample(StandardNormal);
        let xi2: f64 = rng.sample(StandardNormal);
        let next = self.decay * x + self.noise_sd * xi1;
        let dw = self.sqrt_delta * (self.rho * xi1 + self.rho_c * xi2);
        (next, dw)
    }
}

/// OU path and Brownian increments (`dw[k] = W_{k+1} - W_k`, last entry 0).
pub(crate) fn ou_with_increments(
    tau: f64,
    c: f64,
    x0: f64,
    horizon: f64,
    delta: f64,
    rng: RngSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !x0.is_finite() {
        return Err(Error::InvalidParameter("x0 must be finite".into()));
    }
    let transition = OuTransition::new(tau, c, delta)?;
    let steps = step_count(horizon, delta)?;
    let mut rng = rng.rng();
    let mut x = Vec::with_capacity(steps + 1);
    let mut dw = Vec::with_capacity(steps + 1);
    let mut state = x0;
    x.push(state);
    for _ in 0..steps {
        let (next, inc) = transition.step(state, &mut rng);
        dw.push(inc);
        state = next;
        x.push(state);
    }
    dw.push(0.0);
    Ok((x, dw))
}

/// Simulates `dX = -τX dt + √c dW`, `X_0 = x0`, on `[0, horizon]`.
pub fn simulate_ou(tau: f64, c: f64, x0: f64, horizon: f64, delta: f64, rng: RngSpec) -> Result<SamplePath> {
    let (x, _) = ou_with_increments(tau, c, x0, horizon, delta, rng)?;
    SamplePath::single(delta, channel::X, x)
}

/// Simulates `Y_t = R_ϑ(t) + X_t` with channels `Y`, `X` and, when `c > 0`,
/// the Brownian increments `dW` driving `X`. Uses the same variate stream as
/// [`simulate_ou`], so `Y - R_ϑ` equals the corresponding OU path.
pub fn simulate_observation(params: &ModelParams, horizon: f64, delta: f64, rng: RngSpec) -> Result<SamplePath> {
    let (x, dw) = ou_with_increments(params.tau, params.c, params.x0, horizon, delta, rng)?;
    let y: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(k, xk)| params.eval_trend(k as f64 * delta) + xk)
        .collect();
    let mut path = SamplePath::new(delta, vec![(channel::Y.into(), y), (channel::X.into(), x)])?;
    if params.c > 0.0 {
        path.push(channel::DW, dw)?;
    }
    Ok(path)
}
