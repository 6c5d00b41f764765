//! Parameters, trends, local scale and limit information of the
//! polynomial-trend-plus-Ornstein-Uhlenbeck model
//! `Y_t = R(t) + X_t`, `dX_t = -τ X_t dt + √c dW_t`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest supported trend degree. The trend block of the information is a
/// Hilbert-type matrix whose condition number grows like `e^{3.5 p}`; at
/// `p = 8` it is already about `5e11`.
pub const MAX_DEGREE: usize = 8;

/// Horner evaluation of `Σ coeffs[j] t^j`.
pub fn eval_poly(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &a| acc * t + a)
}

/// Horner evaluation of the derivative of `Σ coeffs[j] t^j`.
pub fn eval_poly_derivative(coeffs: &[f64], t: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (j, &a)| acc * t + j as f64 * a)
}

/// Deterministic trend `R_ϑ(t) = Σ_{j=0}^p ϑ_j t^j` with `ϑ_p > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialTrend {
    coeffs: Vec<f64>,
}

impl PolynomialTrend {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        let Some(&lead) = coeffs.last() else {
            return Err(Error::InvalidParameter("trend needs at least one coefficient".into()));
        };
        if coeffs.len() - 1 > MAX_DEGREE {
            return Err(Error::DegreeTooLarge {
                degree: coeffs.len() - 1,
                max: MAX_DEGREE,
            });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("trend coefficients must be finite".into()));
        }
        if lead <= 0.0 {
            return Err(Error::OutsideParameterSpace(format!(
                "leading trend coefficient must be positive, got {lead}"
            )));
        }
        Ok(Self { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, t: f64) -> f64 {
        eval_poly(&self.coeffs, t)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        eval_poly_derivative(&self.coeffs, t)
    }
}

/// Full parameter `θ = (ϑ_0, …, ϑ_p, τ)` together with the known diffusion
/// constant `c` and the deterministic starting point `x0` of the noise.
///
/// `c = 0` is accepted and describes the noiseless system; likelihood
/// computations require `c > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub trend: PolynomialTrend,
    pub tau: f64,
    pub c: f64,
    pub x0: f64,
}

impl ModelParams {
    pub fn new(trend: PolynomialTrend, tau: f64, c: f64, x0: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::OutsideParameterSpace(format!("tau must be positive, got {tau}")));
        }
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::InvalidParameter(format!("c must be nonnegative, got {c}")));
        }
        if !x0.is_finite() {
            return Err(Error::InvalidParameter("x0 must be finite".into()));
        }
        Ok(Self { trend, tau, c, x0 })
    }

    /// Convenience constructor from raw coefficients.
    pub fn from_coeffs(coeffs: &[f64], tau: f64, c: f64, x0: f64) -> Result<Self> {
        Self::new(PolynomialTrend::new(coeffs.to_vec())?, tau, c, x0)
    }

    pub fn degree(&self) -> usize {
        self.trend.degree()
    }

    /// Dimension `p + 2` of `θ`.
    pub fn dim(&self) -> usize {
        self.degree() + 2
    }

    /// `θ` as a vector `(ϑ_0, …, ϑ_p, τ)`.
    pub fn theta(&self) -> Vec<f64> {
        let mut v = self.trend.coeffs().to_vec();
        v.push(self.tau);
        v
    }

    /// Replaces `θ`, keeping `c` and `x0`.
    pub fn with_theta(&self, theta: &[f64]) -> Result<Self> {
        if theta.len() != self.dim() {
            return Err(Error::InvalidParameter(format!(
                "expected {} parameters, got {}",
                self.dim(),
                theta.len()
            )));
        }
        let (coeffs, tau) = theta.split_at(theta.len() - 1);
        Self::new(PolynomialTrend::new(coeffs.to_vec())?, tau[0], self.c, self.x0)
    }

    pub fn eval_trend(&self, t: f64) -> f64 {
        self.trend.eval(t)
    }

    /// `S_θ(t) = R'_ϑ(t) + τ R_ϑ(t)`, the time-dependent drift of
    /// `dY = (S_θ(t) - τY) dt + √c dW`.
    pub fn eval_drift_signal(&self, t: f64) -> f64 {
        self.trend.derivative(t) + self.tau * self.trend.eval(t)
    }
}

/// `R_ϑ(t)` for `t >= 0`.
pub fn eval_trend(trend: &PolynomialTrend, t: f64) -> f64 {
    trend.eval(t)
}

/// `S_θ(t) = R'_ϑ(t) + τ R_ϑ(t)`.
pub fn eval_drift_signal(params: &ModelParams, t: f64) -> f64 {
    params.eval_drift_signal(t)
}

/// Symmetric information matrix (finite-`n` bracket or its limit).
#[derive(Debug, Clone, PartialEq)]
pub struct InfoMatrix {
    entries: DMatrix<f64>,
}

impl InfoMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::InvalidParameter("information matrix must be square".into()));
        }
        let scale = entries.amax().max(f64::MIN_POSITIVE);
        let n = entries.nrows();
        for i in 0..n {
            for j in 0..i {
                if (entries[(i, j)] - entries[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidParameter(format!(
                        "information matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.entries.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// `hᵀ J h`.
    pub fn quadratic_form(&self, h: &[f64]) -> f64 {
        let v = DVector::from_column_slice(h);
        v.dot(&(&self.entries * &v))
    }

    pub fn inverse(&self) -> Option<DMatrix<f64>> {
        self.entries.clone().cholesky().map(|c| c.inverse())
    }
}

/// Limit information `J(t)`: upper-left block `(τ²/c) t^{i+j+1}/(i+j+1)`,
/// last diagonal entry `t/(2τ)`, zeros elsewhere.
pub fn limit_info_matrix(p: usize, t: f64, tau: f64, c: f64) -> Result<InfoMatrix> {
    if p > MAX_DEGREE {
        return Err(Error::DegreeTooLarge { degree: p, max: MAX_DEGREE });
    }
    if !(t >= 0.0 && tau > 0.0 && c > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need t >= 0, tau > 0, c > 0 (got t={t}, tau={tau}, c={c})"
        )));
    }
    let d = p + 2;
    let mut j = DMatrix::zeros(d, d);
    let block = hilbert_like_matrix(p, t);
    let factor = tau * tau / c;
    for r in 0..=p {
        for s in 0..=p {
            j[(r, s)] = factor * block[(r, s)];
        }
    }
    j[(p + 1, p + 1)] = t / (2.0 * tau);
    InfoMatrix::new(j)
}

/// `J̃(t)` with entries `t^{i+j+1}/(i+j+1)`, `i, j = 0..=p`.
pub fn hilbert_like_matrix(p: usize, t: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p + 1, p + 1, |i, j| {
        let k = (i + j + 1) as i32;
        t.powi(k) / k as f64
    })
}

/// Diagonal local scale `ψ_n = diag(n^{-1/2}, n^{-3/2}, …, n^{-(2p+1)/2}, n^{-1/2})`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalScale {
    diag: Vec<f64>,
}

impl LocalScale {
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Rates of the trend coordinates only (`ψ̃_n`).
    pub fn trend_block(&self) -> &[f64] {
        &self.diag[..self.diag.len() - 1]
    }

    /// `ψ_n h`.
    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        self.diag.iter().zip(h).map(|(s, x)| s * x).collect()
    }

    /// `ψ_n^{-1} v`.
    pub fn apply_inverse(&self, v: &[f64]) -> Vec<f64> {
        self.diag.iter().zip(v).map(|(s, x)| x / s).collect()
    }
}

pub fn local_scale(p: usize, n: f64) -> Result<LocalScale> {
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {n}")));
    }
    let mut diag: Vec<f64> = (0..=p).map(|j| n.powf(-(2.0 * j as f64 + 1.0) / 2.0)).collect();
    diag.push(n.powf(-0.5));
    Ok(LocalScale { diag })
}
