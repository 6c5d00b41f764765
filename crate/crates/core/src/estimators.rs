//! Least-squares trend estimator, the plug-in `τ` estimator, and their
//! Hodgkin-Huxley submodel versions, with the grid integrals they use.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{eval_poly, MAX_DEGREE};
use crate::path::{channel, SamplePath};
use crate::quadrature::{left_sum, trapezoid_by};

/// Largest accepted condition number of the scaled normal equations.
pub const MAX_CONDITION: f64 = 1e12;

/// Residual energy `∫(Y - R_ϑ̃)²` below this fraction of `∫Y²` is rounding
/// noise; `τ̃` is then reported as degenerate.
pub const RESIDUAL_FLOOR: f64 = 1e-24;

/// Trapezoid value of `∫_0^n s^i Y_s ds`.
pub fn riemann_moment(path: &SamplePath, i: usize) -> Result<f64> {
    let y = path.channel(channel::Y)?;
    Ok(moment(y, path.delta(), i))
}

fn moment(values: &[f64], delta: f64, i: usize) -> f64 {
    trapezoid_by(values.len(), delta, |k| (k as f64 * delta).powi(i as i32) * values[k])
}

/// Left-endpoint sum `Σ_k g(t_k)(Z_{k+1} - Z_k)` of channel `g` of
/// `integrand` against channel `z` of `integrator`.
pub fn ito_integral(integrand: &SamplePath, g: &str, integrator: &SamplePath, z: &str) -> Result<f64> {
    integrand.same_grid(integrator)?;
    left_sum(integrand.channel(g)?, integrator.channel(z)?)
}

/// Least-squares fit of a degree-`p` trend.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendFit {
    /// `ϑ̃_0 … ϑ̃_p`.
    pub theta: Vec<f64>,
    /// `ψ̃_n^{-1} ϑ̃`, the solution of the scaled system.
    pub scaled: Vec<f64>,
    pub horizon: f64,
    /// `∫_0^n s^i Y_s ds`, `i = 0..=p`.
    pub moment_vector: Vec<f64>,
    /// Spectral condition number of the scaled Gram matrix.
    pub condition_number: f64,
}

/// Gram matrix `∫_0^1 u^{i+j} du` and moments `√n ∫_0^1 u^i Y(nu) du` on the
/// rescaled grid, both by the trapezoid rule.
fn scaled_system(values: &[f64], horizon: f64, p: usize) -> (DMatrix<f64>, DVector<f64>) {
    let steps = values.len() - 1;
    let du = 1.0 / steps as f64;
    let mut power_sums = vec![0.0; 2 * p + 1];
    let mut moments = vec![0.0; p + 1];
    for (k, y) in values.iter().enumerate() {
        let w = if k == 0 || k == steps { 0.5 * du } else { du };
        let u = k as f64 * du;
        let mut up = w;
        for (i, s) in power_sums.iter_mut().enumerate() {
            *s += up;
            if i <= p {
                moments[i] += up * y;
            }
            up *= u;
        }
    }
    let root_n = horizon.sqrt();
    let gram = DMatrix::from_fn(p + 1, p + 1, |i, j| power_sums[i + j]);
    let rhs = DVector::from_iterator(p + 1, moments.into_iter().map(|m| root_n * m));
    (gram, rhs)
}

/// Least-squares fit of `Σ ϑ_i s^i` to the given values on `t_k = k Δ`.
pub fn lse_trend_values(values: &[f64], delta: f64, p: usize) -> Result<TrendFit> {
    if p > MAX_DEGREE {
        return Err(Error::DegreeTooLarge { degree: p, max: MAX_DEGREE });
    }
    if values.len() < 2 {
        return Err(Error::InvalidPath("need at least one grid step".into()));
    }
    let horizon = (values.len() - 1) as f64 * delta;
    let (gram, rhs) = scaled_system(values, horizon, p);
    let eig = gram.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let condition_number = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition_number > MAX_CONDITION {
        return Err(Error::IllConditioned(condition_number));
    }
    let chol = gram.cholesky().ok_or(Error::IllConditioned(condition_number))?;
    let scaled: Vec<f64> = chol.solve(&rhs).iter().copied().collect();
    let theta = scaled
        .iter()
        .enumerate()
        .map(|(i, u)| u * horizon.powf(-(2.0 * i as f64 + 1.0) / 2.0))
        .collect();
    let moment_vector = (0..=p).map(|i| moment(values, delta, i)).collect();
    Ok(TrendFit {
        theta,
        scaled,
        horizon,
        moment_vector,
        condition_number,
    })
}

/// `ϑ̃(n)` from channel `Y`.
pub fn lse_trend(path: &SamplePath, p: usize) -> Result<TrendFit> {
    lse_trend_values(path.channel(channel::Y)?, path.delta(), p)
}

/// `[Σ_i ϑ̃_i ∫ s^i dY - ∫ Y dY] / [∫ Y² ds - ϑ̃ᵀ J̃ ϑ̃]`, evaluated through the
/// fitted residual `Y - R_ϑ̃`: the numerator is `-Σ_k (Y_k - R_ϑ̃(t_k)) ΔY_k`
/// and the denominator `∫ (Y - R_ϑ̃)² ds`.
pub fn estimate_tau_values(values: &[f64], delta: f64, theta_tilde: &[f64]) -> Result<f64> {
    if theta_tilde.is_empty() {
        return Err(Error::InvalidParameter("trend coefficients must be non-empty".into()));
    }
    let resid: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(k, y)| y - eval_poly(theta_tilde, k as f64 * delta))
        .collect();
    let num = -left_sum(&resid, values)?;
    let den = trapezoid_by(resid.len(), delta, |k| resid[k] * resid[k]);
    let energy = trapezoid_by(values.len(), delta, |k| values[k] * values[k]);
    if !(den > RESIDUAL_FLOOR * energy && den.is_finite()) {
        return Err(Error::DegenerateDenominator(den));
    }
    Ok(num / den)
}

/// `τ̃(n)` from channel `Y` and the trend estimate on the same path.
pub fn estimate_tau(path: &SamplePath, theta_tilde: &[f64]) -> Result<f64> {
    estimate_tau_values(path.channel(channel::Y)?, path.delta(), theta_tilde)
}

/// Full estimate `(ϑ̃, τ̃)`; a degenerate `τ` denominator is recorded, not fatal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationResult {
    pub theta_hat: Vec<f64>,
    pub tau_hat: Option<f64>,
    pub tau_flag: Option<String>,
    pub horizon: f64,
    pub moment_vector: Vec<f64>,
    pub condition_number: f64,
}

impl EstimationResult {
    /// `(ϑ̂, τ̂)` when `τ̂` exists.
    pub fn params(&self) -> Option<Vec<f64>> {
        self.tau_hat.map(|t| {
            let mut v = self.theta_hat.clone();
            v.push(t);
            v
        })
    }
}

pub fn estimate_values(values: &[f64], delta: f64, p: usize) -> Result<EstimationResult> {
    let fit = lse_trend_values(values, delta, p)?;
    let (tau_hat, tau_flag) = match estimate_tau_values(values, delta, &fit.theta) {
        Ok(t) => (Some(t), None),
        Err(e @ Error::DegenerateDenominator(_)) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    Ok(EstimationResult {
        theta_hat: fit.theta,
        tau_hat,
        tau_flag,
        horizon: fit.horizon,
        moment_vector: fit.moment_vector,
        condition_number: fit.condition_number,
    })
}

/// `(ϑ̃, τ̃)` from channel `Y`.
pub fn estimate(path: &SamplePath, p: usize) -> Result<EstimationResult> {
    estimate_values(path.channel(channel::Y)?, path.delta(), p)
}

/// `ϑ̆(n) = (3/n³) ∫_0^n s ζ_s ds`.
pub fn hh_breve_theta_values(zeta: &[f64], delta: f64) -> f64 {
    let n = (zeta.len() - 1) as f64 * delta;
    3.0 / (n * n * n) * moment(zeta, delta, 1)
}

/// `ϑ̆` from channel `zeta`.
pub fn hh_breve_theta(path: &SamplePath) -> Result<f64> {
    Ok(hh_breve_theta_values(path.channel(channel::ZETA)?, path.delta()))
}

/// `τ̆ = [ϑ̆ ∫ s dζ - ∫ ζ dζ] / [∫ ζ² ds - ϑ̆² n³/3]`, evaluated through the
/// residual `ζ - ϑ̆ s` as in [`estimate_tau_values`].
pub fn hh_breve_tau_values(zeta: &[f64], delta: f64, theta_breve: f64) -> Result<f64> {
    estimate_tau_values(zeta, delta, &[0.0, theta_breve])
}

/// `τ̆` from channel `zeta`.
pub fn hh_breve_tau(path: &SamplePath, theta_breve: f64) -> Result<f64> {
    hh_breve_tau_values(path.channel(channel::ZETA)?, path.delta(), theta_breve)
}

/// Submodel estimate `(ϑ̆, τ̆)` with `ϑ_0 ≡ 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreveEstimate {
    pub theta_hat: f64,
    pub tau_hat: Option<f64>,
    pub tau_flag: Option<String>,
    pub horizon: f64,
}

pub fn hh_estimate_values(zeta: &[f64], delta: f64) -> Result<BreveEstimate> {
    if zeta.len() < 2 {
        return Err(Error::InvalidPath("need at least one grid step".into()));
    }
    let theta_hat = hh_breve_theta_values(zeta, delta);
    let (tau_hat, tau_flag) = match hh_breve_tau_values(zeta, delta, theta_hat) {
        Ok(t) => (Some(t), None),
        Err(e @ Error::DegenerateDenominator(_)) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    Ok(BreveEstimate {
        theta_hat,
        tau_hat,
        tau_flag,
        horizon: (zeta.len() - 1) as f64 * delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::ou::{simulate_observation, simulate_ou};
    use crate::rng::RngSpec;
    use proptest::prelude::*;

    fn grid(n: f64, delta: f64, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let steps = (n / delta).round() as usize;
        (0..=steps).map(|k| f(k as f64 * delta)).collect()
    }

    fn y_path(values: Vec<f64>, delta: f64) -> SamplePath {
        SamplePath::single(delta, channel::Y, values).unwrap()
    }

    #[test]
    fn moment_examples() {
        assert!((riemann_moment(&y_path(grid(2.0, 0.01, |_| 1.0), 0.01), 0).unwrap() - 2.0).abs() < 1e-12);
        let m = riemann_moment(&y_path(grid(1.0, 1e-3, |s| s), 1e-3), 1).unwrap();
        assert!((m - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn moment_matches_simpson_on_a_random_path() {
        let delta = 0.01;
        let path = simulate_ou(1.0, 1.0, 0.3, 2.0, delta, RngSpec::new(3, 0)).unwrap();
        let x = path.channel(channel::X).unwrap();
        // smooth functional of the path: integrate s² cos(X)
        let f: Vec<f64> = x.iter().enumerate().map(|(k, v)| (k as f64 * delta).powi(2) * v.cos()).collect();
        let trap = trapezoid_by(f.len(), delta, |k| f[k]);
        let steps = f.len() - 1;
        assert_eq!(steps % 2, 0);
        let simpson = delta / 3.0
            * (f[0] + f[steps] + (1..steps).map(|k| if k % 2 == 1 { 4.0 * f[k] } else { 2.0 * f[k] }).sum::<f64>());
        // both rules approximate the same Riemann integral; for a rough
        // integrand they agree to O(Δ^{3/2})
        assert!((trap - simpson).abs() < 10.0 * delta.powf(1.5), "{trap} vs {simpson}");

        let y = grid(2.0, delta, |s| (3.0 * s).sin() + s);
        let steps = y.len() - 1;
        let trap = moment(&y, delta, 2);
        let g: Vec<f64> = y.iter().enumerate().map(|(k, v)| (k as f64 * delta).powi(2) * v).collect();
        let simpson = delta / 3.0
            * (g[0] + g[steps] + (1..steps).map(|k| if k % 2 == 1 { 4.0 * g[k] } else { 2.0 * g[k] }).sum::<f64>());
        assert!((trap - simpson).abs() < 10.0 * delta * delta);
    }

    #[test]
    fn ito_integral_examples() {
        let delta = 1e-4;
        let s = y_path(grid(1.0, delta, |s| s), delta);
        let s2 = y_path(grid(1.0, delta, |s| s * s), delta);
        let v = ito_integral(&s, channel::Y, &s2, channel::Y).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-3);

        let one = y_path(grid(1.0, delta, |_| 1.0), delta);
        let z = simulate_ou(1.0, 1.0, 0.5, 1.0, delta, RngSpec::new(1, 0)).unwrap();
        let zx = z.channel(channel::X).unwrap();
        let t = ito_integral(&one, channel::Y, &z, channel::X).unwrap();
        assert!((t - (zx[zx.len() - 1] - zx[0])).abs() < 1e-12);

        // ∫Z dZ = (Z_n² - Z_0² - [Z]_n)/2 for left sums
        let qv: f64 = zx.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        let zz = ito_integral(&z, channel::X, &z, channel::X).unwrap();
        let last = zx[zx.len() - 1];
        assert!((zz - 0.5 * (last * last - zx[0] * zx[0] - qv)).abs() < 1e-10);

        let short = y_path(grid(0.5, delta, |_| 1.0), delta);
        assert!(matches!(ito_integral(&short, channel::Y, &z, channel::X), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn noiseless_recovery() {
        let coeffs = [1.5, -0.7, 0.25, 0.02];
        for p in 0..=3 {
            let theta = &coeffs[..=p];
            let fit = lse_trend(&y_path(grid(10.0, 1e-3, |s| eval_poly(theta, s)), 1e-3), p).unwrap();
            for (a, b) in fit.theta.iter().zip(theta) {
                assert!((a - b).abs() < 1e-6 * b.abs().max(1.0), "p={p}: {a} vs {b}");
            }
            assert!(fit.condition_number >= 1.0);
        }
        assert!(matches!(
            lse_trend(&y_path(grid(1.0, 0.1, |s| s), 0.1), 9),
            Err(Error::DegreeTooLarge { .. })
        ));
    }

    #[test]
    fn constant_fit_is_time_average() {
        let path = simulate_ou(1.0, 1.0, 2.0, 50.0, 0.01, RngSpec::new(5, 0)).unwrap();
        let x = path.channel(channel::X).unwrap().to_vec();
        let fit = lse_trend_values(&x, 0.01, 0).unwrap();
        let avg = trapezoid_by(x.len(), 0.01, |k| x[k]) / 50.0;
        assert!((fit.theta[0] - avg).abs() < 1e-12);
        assert!((fit.moment_vector[0] - 50.0 * avg).abs() < 1e-10);
    }

    /// Error-free transformation sum used by the extended-precision oracle.
    #[derive(Clone, Copy, Default)]
    struct DoubleDouble(f64, f64);

    impl DoubleDouble {
        fn add(self, x: f64) -> Self {
            let s = self.0 + x;
            let bp = s - self.0;
            let err = (self.0 - (s - bp)) + (x - bp);
            let lo = self.1 + err;
            let hi = s + lo;
            DoubleDouble(hi, lo - (hi - s))
        }

        fn add_product(self, a: f64, b: f64) -> Self {
            let p = a * b;
            let e = a.mul_add(b, -p);
            self.add(p).add(e)
        }

        fn value(self) -> f64 {
            self.0 + self.1
        }
    }

    #[test]
    fn linear_fit_matches_extended_precision_normal_equations() {
        let params = ModelParams::from_coeffs(&[0.3, 1.0], 1.0, 1.0, 0.0).unwrap();
        let delta = 0.01;
        let path = simulate_observation(&params, 500.0, delta, RngSpec::new(11, 0)).unwrap();
        let y = path.channel(channel::Y).unwrap();
        let steps = y.len() - 1;
        let mut s = [DoubleDouble::default(); 3];
        let mut m = [DoubleDouble::default(); 2];
        for (k, yk) in y.iter().enumerate() {
            let w = if k == 0 || k == steps { 0.5 * delta } else { delta };
            let t = k as f64 * delta;
            s[0] = s[0].add(w);
            s[1] = s[1].add_product(w, t);
            s[2] = s[2].add_product(w * t, t);
            m[0] = m[0].add_product(w, *yk);
            m[1] = m[1].add_product(w * t, *yk);
        }
        let [s0, s1, s2] = s.map(DoubleDouble::value);
        let [m0, m1] = m.map(DoubleDouble::value);
        let det = DoubleDouble::default().add_product(s0, s2).add_product(-s1, s1).value();
        let a0 = DoubleDouble::default().add_product(s2, m0).add_product(-s1, m1).value() / det;
        let a1 = DoubleDouble::default().add_product(s0, m1).add_product(-s1, m0).value() / det;

        let fit = lse_trend(&path, 1).unwrap();
        assert!((fit.theta[0] - a0).abs() <= 1e-8 * a0.abs(), "{} vs {a0}", fit.theta[0]);
        assert!((fit.theta[1] - a1).abs() <= 1e-8 * a1.abs(), "{} vs {a1}", fit.theta[1]);
    }

    #[test]
    fn tau_reduces_to_ou_drift_estimator() {
        let delta = 0.01;
        let path = simulate_ou(1.0, 1.0, 0.0, 200.0, delta, RngSpec::new(2, 0)).unwrap();
        let x = path.channel(channel::X).unwrap();
        let direct = -left_sum(x, x).unwrap() / trapezoid_by(x.len(), delta, |k| x[k] * x[k]);
        let tau = estimate_tau_values(x, delta, &[0.0]).unwrap();
        assert!((tau - direct).abs() < 1e-10 * direct.abs());
    }

    #[test]
    fn tau_numerator_matches_stochastic_integral_form() {
        let params = ModelParams::from_coeffs(&[0.5, 1.0, 0.01], 1.5, 1.0, 0.2).unwrap();
        let delta = 0.01;
        let path = simulate_observation(&params, 40.0, delta, RngSpec::new(9, 0)).unwrap();
        let y = path.channel(channel::Y).unwrap();
        let fit = lse_trend(&path, 2).unwrap();
        let sums: f64 = (0..=2)
            .map(|i| {
                let g: Vec<f64> = (0..y.len()).map(|k| (k as f64 * delta).powi(i)).collect();
                fit.theta[i as usize] * left_sum(&g, y).unwrap()
            })
            .sum();
        let num = sums - left_sum(y, y).unwrap();
        let gram = crate::model::hilbert_like_matrix(2, 40.0);
        let th = DVector::from_column_slice(&fit.theta);
        let den_literal = trapezoid_by(y.len(), delta, |k| y[k] * y[k]) - th.dot(&(&gram * &th));
        let tau = estimate_tau(&path, &fit.theta).unwrap();
        // denominators agree up to the quadrature error of the Gram matrix
        assert!((tau - num / den_literal).abs() < 1e-3 * tau.abs(), "{tau} vs {}", num / den_literal);
        let resid: Vec<f64> = y.iter().enumerate().map(|(k, v)| v - eval_poly(&fit.theta, k as f64 * delta)).collect();
        let den = trapezoid_by(resid.len(), delta, |k| resid[k] * resid[k]);
        assert!((tau * den - num).abs() < 1e-9 * num.abs());
    }

    #[test]
    fn degenerate_denominator_is_flagged() {
        let v = grid(5.0, 0.01, |s| 1.0 + 2.0 * s);
        let est = estimate_values(&v, 0.01, 1).unwrap();
        assert!(est.tau_hat.is_none());
        assert!(est.tau_flag.is_some());
    }

    #[test]
    fn tau_is_consistent() {
        let params = ModelParams::from_coeffs(&[0.0, 1.0], 1.0, 1.0, 0.0).unwrap();
        let mut taus: Vec<f64> = (0..200)
            .map(|r| {
                let path = simulate_observation(&params, 2000.0, 0.01, RngSpec::new(77, r)).unwrap();
                estimate(&path, 1).unwrap().tau_hat.unwrap()
            })
            .collect();
        taus.sort_by(f64::total_cmp);
        let median = 0.5 * (taus[99] + taus[100]);
        assert!((median - 1.0).abs() < 0.05, "median {median}");
    }

    #[test]
    fn breve_examples() {
        let delta = 1e-3;
        let line = grid(20.0, delta, |s| 6.0 * s);
        assert!((hh_breve_theta_values(&line, delta) - 6.0).abs() < 1e-8);
        let quad = grid(1.0, delta, |s| s * s);
        assert!((hh_breve_theta_values(&quad, delta) - 0.75).abs() < 1e-6);

        // submodel identity: least squares with ϑ_0 frozen at zero
        let path = simulate_ou(1.0, 1.0, 0.0, 100.0, 0.01, RngSpec::new(6, 0)).unwrap();
        let zeta: Vec<f64> =
            path.channel(channel::X).unwrap().iter().enumerate().map(|(k, x)| 6.0 * k as f64 * 0.01 + x).collect();
        let st = trapezoid_by(zeta.len(), 0.01, |k| (k as f64 * 0.01).powi(2));
        let slope = moment(&zeta, 0.01, 1) / st;
        let breve = hh_breve_theta_values(&zeta, 0.01);
        // the literal weight 3/n³ differs from 1/∫s² by the relative trapezoid bias Δ²/(2n²)
        assert!((breve - slope).abs() < 1e-8 * slope);

        let path = SamplePath::single(0.01, channel::ZETA, zeta.clone()).unwrap();
        let est = hh_estimate_values(&zeta, 0.01).unwrap();
        assert_eq!(est.theta_hat, hh_breve_theta(&path).unwrap());
        assert_eq!(est.tau_hat.unwrap(), hh_breve_tau(&path, est.theta_hat).unwrap());
    }

    #[test]
    fn breve_tau_matches_literal_formula() {
        let delta = 0.01;
        let path = simulate_ou(1.0, 1.0, 0.0, 500.0, delta, RngSpec::new(8, 0)).unwrap();
        let zeta: Vec<f64> =
            path.channel(channel::X).unwrap().iter().enumerate().map(|(k, x)| 6.0 * k as f64 * delta + x).collect();
        let n = 500.0;
        let th = hh_breve_theta_values(&zeta, delta);
        let s: Vec<f64> = (0..zeta.len()).map(|k| k as f64 * delta).collect();
        let num = th * left_sum(&s, &zeta).unwrap() - left_sum(&zeta, &zeta).unwrap();
        let den = trapezoid_by(zeta.len(), delta, |k| zeta[k] * zeta[k]) - th * th * n * n * n / 3.0;
        let tau = hh_breve_tau_values(&zeta, delta, th).unwrap();
        assert!((tau - num / den).abs() < 1e-2 * tau, "{tau} vs {}", num / den);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn least_squares_is_affine_equivariant(
            seed in 0u64..1000,
            p in 0usize..=3,
            q in proptest::collection::vec(-2.0f64..2.0, 4),
            n in 2.0f64..20.0,
        ) {
            let params = ModelParams::from_coeffs(&[0.2, 1.0], 1.0, 1.0, 0.0).unwrap();
            let delta = 0.01;
            let path = simulate_observation(&params, n, delta, RngSpec::new(seed, 0)).unwrap();
            let y = path.channel(channel::Y).unwrap();
            let q = &q[..=p];
            let shifted: Vec<f64> = y.iter().enumerate().map(|(k, v)| v + eval_poly(q, k as f64 * delta)).collect();
            let a = lse_trend_values(y, delta, p).unwrap();
            let b = lse_trend_values(&shifted, delta, p).unwrap();
            for i in 0..=p {
                let scale = 1.0 + a.theta[i].abs() + q[i].abs();
                prop_assert!((b.theta[i] - a.theta[i] - q[i]).abs() < 1e-9 * scale,
                    "i={} {} vs {}", i, b.theta[i] - a.theta[i], q[i]);
            }
        }

        #[test]
        fn tau_ignores_constant_offsets(seed in 0u64..1000, p in 0usize..=2, shift in -50.0f64..50.0) {
            let params = ModelParams::from_coeffs(&[0.2, 1.0], 1.0, 1.0, 0.0).unwrap();
            let delta = 0.01;
            let path = simulate_observation(&params, 20.0, delta, RngSpec::new(seed, 1)).unwrap();
            let y = path.channel(channel::Y).unwrap();
            let shifted: Vec<f64> = y.iter().map(|v| v + shift).collect();
            let a = estimate_values(y, delta, p).unwrap().tau_hat.unwrap();
            let b = estimate_values(&shifted, delta, p).unwrap().tau_hat.unwrap();
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "{} vs {}", a, b);
        }

        #[test]
        fn breve_theta_recovers_any_line(theta in 0.01f64..50.0, n in 0.5f64..100.0) {
            let delta = 1e-3;
            let line = grid(n, delta, |s| theta * s);
            let horizon = (line.len() - 1) as f64 * delta;
            let line: Vec<f64> = (0..line.len()).map(|k| theta * k as f64 * delta).collect();
            let est = hh_breve_theta_values(&line, delta);
            // trapezoid bias of ∫ s² ds is Δ²n/6
            let bias = theta * 0.5 * delta * delta / (horizon * horizon);
            prop_assert!((est - theta).abs() <= bias + 1e-12 * theta);
        }
    }
}
