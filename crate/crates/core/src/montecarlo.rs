//! Replication harness: seeded simulations, estimation, rescaling by the
//! local scale, and summaries against the limiting covariance. Also the
//! single-path and replicated functionals of the OU process.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate, hh_estimate_values};
use crate::hh::{simulate_hh, HHParams, HHState};
use crate::model::{limit_info_matrix, ModelParams};
use crate::ou::{ou_with_increments, simulate_observation};
use crate::path::{channel, step_count};
use crate::quadrature::trapezoid_by;
use crate::reconstruct::reconstruct_input;
use crate::rng::RngSpec;

/// Largest tolerated fraction of failed replications.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    OuTrend,
    Hh,
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ou-trend" => Ok(Self::OuTrend),
            "hh" => Ok(Self::Hh),
            _ => Err(Error::InvalidParameter(format!("unknown model `{s}` (expected ou-trend or hh)"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::OuTrend => "ou-trend",
            Self::Hh => "hh",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Submodel {
    /// All of `(ϑ_0, …, ϑ_p, τ)` estimated.
    Full,
    /// `R_ϑ(s) = ϑs`, i.e. `ϑ_0 ≡ 0` known.
    Theta0Fixed,
}

impl FromStr for Submodel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "theta0-fixed" => Ok(Self::Theta0Fixed),
            _ => Err(Error::InvalidParameter(format!("unknown submodel `{s}` (expected full or theta0-fixed)"))),
        }
    }
}

impl fmt::Display for Submodel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Theta0Fixed => "theta0-fixed",
        })
    }
}

/// Which channel of a Hodgkin-Huxley path the estimators see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HhInput {
    /// Accumulated input reconstructed from the membrane potential.
    Reconstructed,
    /// The simulator's own `Y` channel.
    Direct,
}

impl FromStr for HhInput {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reconstructed" => Ok(Self::Reconstructed),
            "direct" => Ok(Self::Direct),
            _ => Err(Error::InvalidParameter(format!("unknown input `{s}` (expected reconstructed or direct)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub model: ModelKind,
    pub submodel: Submodel,
    /// Trend degree; the Hodgkin-Huxley submodel has `p = 1`.
    pub p: usize,
    /// Trend coefficients `ϑ_0 … ϑ_p` (a single slope for `hh`).
    pub theta: Vec<f64>,
    pub tau: f64,
    pub c: f64,
    pub x0: f64,
    pub n: f64,
    pub delta: f64,
    pub replications: usize,
    pub seed: u64,
    pub workers: usize,
    pub hh_input: HhInput,
    /// Overrides the default relative tolerance of every covariance check.
    pub tolerance: Option<f64>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::OuTrend,
            submodel: Submodel::Full,
            p: 1,
            theta: vec![0.0, 1.0],
            tau: 1.0,
            c: 1.0,
            x0: 0.0,
            n: 2000.0,
            delta: 0.01,
            replications: 500,
            seed: 0,
            workers: 1,
            hh_input: HhInput::Reconstructed,
            tolerance: None,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::InvalidParameter("a study needs at least two replications".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidParameter("workers must be at least 1".into()));
        }
        step_count(self.n, self.delta)?;
        match (self.model, self.submodel) {
            (ModelKind::OuTrend, Submodel::Full) => {
                if self.theta.len() != self.p + 1 {
                    return Err(Error::InvalidParameter(format!(
                        "p = {} needs {} trend coefficients, got {}",
                        self.p,
                        self.p + 1,
                        self.theta.len()
                    )));
                }
                if !(self.c > 0.0) {
                    return Err(Error::InvalidParameter("a study needs c > 0".into()));
                }
                self.ou_params().map(|_| ())
            }
            (ModelKind::Hh, Submodel::Theta0Fixed) => {
                if self.theta.len() != 1 {
                    return Err(Error::InvalidParameter("the hh submodel takes a single slope theta".into()));
                }
                if !(self.c > 0.0) {
                    return Err(Error::InvalidParameter("a study needs c > 0".into()));
                }
                self.hh_params().map(|_| ())
            }
            (m, s) => Err(Error::InvalidParameter(format!("model {m} does not support submodel {s}"))),
        }
    }

    pub fn ou_params(&self) -> Result<ModelParams> {
        ModelParams::from_coeffs(&self.theta, self.tau, self.c, self.x0)
    }

    pub fn hh_params(&self) -> Result<HHParams> {
        HHParams::new(self.theta[0], self.tau, self.c)
    }

    /// Names of the rescaled-error coordinates.
    pub fn labels(&self) -> Vec<String> {
        match self.model {
            ModelKind::OuTrend => (0..=self.p).map(|i| format!("theta{i}")).chain(["tau".to_string()]).collect(),
            ModelKind::Hh => vec!["theta".into(), "tau".into()],
        }
    }

    /// Limiting covariance of the rescaled errors.
    pub fn target_cov(&self) -> Result<DMatrix<f64>> {
        match self.model {
            ModelKind::OuTrend => {
                let j = limit_info_matrix(self.p, 1.0, self.tau, self.c)?;
                let d = self.p + 1;
                let block = j
                    .matrix()
                    .view((0, 0), (d, d))
                    .into_owned()
                    .cholesky()
                    .ok_or_else(|| Error::InvalidParameter("limit information is not invertible".into()))?
                    .inverse();
                let mut t = DMatrix::zeros(d + 1, d + 1);
                t.view_mut((0, 0), (d, d)).copy_from(&block);
                t[(d, d)] = 1.0 / j.get(d, d);
                Ok(t)
            }
            ModelKind::Hh => Ok(DMatrix::from_row_slice(
                2,
                2,
                &[3.0 * self.c / (self.tau * self.tau), 0.0, 0.0, 2.0 * self.tau],
            )),
        }
    }

    /// Tolerance rule for entry `(i, j)`.
    pub fn entry_tolerance(&self, i: usize, j: usize) -> Tolerance {
        let target = self.target_cov().map(|t| t[(i, j)]).unwrap_or(0.0);
        if target == 0.0 {
            return match self.model {
                ModelKind::Hh => Tolerance::Absolute(0.3),
                ModelKind::OuTrend => Tolerance::Normalized(self.tolerance.unwrap_or(0.2)),
            };
        }
        let default = match (self.model, i, j) {
            (ModelKind::Hh, 0, 0) => 0.15,
            _ => 0.2,
        };
        Tolerance::Relative(self.tolerance.unwrap_or(default))
    }
}

/// How an empirical covariance entry is compared to its target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum Tolerance {
    /// `|cov - T| ≤ tol · |T|`.
    Relative(f64),
    /// `|cov - T| ≤ tol`.
    Absolute(f64),
    /// `|cov - T| ≤ tol · √(T_ii T_jj)`, for zero targets.
    Normalized(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToleranceCheck {
    pub entry: (usize, usize),
    pub label: String,
    pub empirical: f64,
    pub target: f64,
    pub tolerance: Tolerance,
    /// Deviation in the units of the tolerance.
    pub deviation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MCSummary {
    pub replications: usize,
    pub horizon: f64,
    pub labels: Vec<String>,
    pub empirical_mean: Vec<f64>,
    pub empirical_cov: Vec<Vec<f64>>,
    pub target_cov: Vec<Vec<f64>>,
    /// `(cov - T)/|T|` for nonzero targets and `cov/√(T_ii T_jj)` otherwise.
    pub rel_dev: Vec<Vec<f64>>,
    pub skewness: Vec<f64>,
    pub excess_kurtosis: Vec<f64>,
    pub failure_count: usize,
    pub checks: Vec<ToleranceCheck>,
    /// Rescaled errors of the successful replications, in replication order.
    #[serde(skip)]
    pub rescaled_errors: Vec<Vec<f64>>,
    /// Replication indices matching `rescaled_errors`.
    #[serde(skip)]
    pub replication_ids: Vec<usize>,
}

impl MCSummary {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failure_budget_exceeded(&self) -> bool {
        self.failure_count as f64 > MAX_FAILURE_FRACTION * self.replications as f64
    }
}

/// Rescaled error `ψ_n^{-1}(θ̂ - θ)` of one replication.
pub fn replicate(config: &StudyConfig, index: u64) -> Result<Vec<f64>> {
    let rng = RngSpec::new(config.seed, index);
    let n = config.n;
    match config.model {
        ModelKind::OuTrend => {
            let params = config.ou_params()?;
            let path = simulate_observation(&params, n, config.delta, rng)?;
            let est = estimate(&path, config.p)?;
            let horizon = est.horizon;
            let tau_hat = est.tau_hat.ok_or(Error::DegenerateDenominator(0.0))?;
            let mut out: Vec<f64> = est
                .theta_hat
                .iter()
                .zip(&config.theta)
                .enumerate()
                .map(|(i, (hat, th))| horizon.powf((2.0 * i as f64 + 1.0) / 2.0) * (hat - th))
                .collect();
            out.push(horizon.sqrt() * (tau_hat - config.tau));
            Ok(out)
        }
        ModelKind::Hh => {
            let params = config.hh_params()?;
            let init = HHState::default();
            let path = simulate_hh(&params, &init, n, config.delta, rng)?;
            let est = match config.hh_input {
                HhInput::Reconstructed => {
                    let zeta = reconstruct_input(&path, &init, &params)?;
                    hh_estimate_values(zeta.channel(channel::ZETA)?, config.delta)?
                }
                HhInput::Direct => hh_estimate_values(path.channel(channel::Y)?, config.delta)?,
            };
            let tau_hat = est.tau_hat.ok_or(Error::DegenerateDenominator(0.0))?;
            let h = est.horizon;
            Ok(vec![h.powf(1.5) * (est.theta_hat - config.theta[0]), h.sqrt() * (tau_hat - config.tau)])
        }
    }
}

/// Runs `f(0..count)` on a pool of `workers` threads, results in index order.
pub fn run_parallel<T: Send>(workers: usize, count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Result<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(&f).collect()))
}

/// Sample mean and unbiased covariance of the rows.
pub fn mean_and_cov(rows: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let d = rows.first().map_or(0, Vec::len);
    let m = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (a, x) in mean.iter_mut().zip(r) {
            *a += x;
        }
    }
    mean.iter_mut().for_each(|a| *a /= m);
    let mut cov = DMatrix::zeros(d, d);
    for r in rows {
        for i in 0..d {
            for j in 0..=i {
                cov[(i, j)] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            let v = cov[(i, j)] / (m - 1.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    (mean, cov)
}

/// Standardized third moment and excess kurtosis of each column.
pub fn shape_moments(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = rows.first().map_or(0, Vec::len);
    let m = rows.len() as f64;
    (0..d)
        .map(|i| {
            let mean = rows.iter().map(|r| r[i]).sum::<f64>() / m;
            let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
            for r in rows {
                let z = r[i] - mean;
                m2 += z * z;
                m3 += z * z * z;
                m4 += z * z * z * z;
            }
            let (m2, m3, m4) = (m2 / m, m3 / m, m4 / m);
            (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
        })
        .unzip()
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Runs the study and summarizes it without enforcing the failure budget.
pub fn run_study_unchecked(config: &StudyConfig) -> Result<MCSummary> {
    config.validate()?;
    let results = run_parallel(config.workers, config.replications, |r| replicate(config, r as u64))?;
    let mut rows = Vec::with_capacity(results.len());
    let mut ids = Vec::with_capacity(results.len());
    let mut failure_count = 0;
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(v) => {
                rows.push(v);
                ids.push(r);
            }
            Err(_) => failure_count += 1,
        }
    }
    if rows.len() < 2 {
        return Err(Error::TooManyFailures {
            failed: failure_count,
            total: config.replications,
        });
    }
    let (mean, cov) = mean_and_cov(&rows);
    let (skewness, excess_kurtosis) = shape_moments(&rows);
    let target = config.target_cov()?;
    let labels = config.labels();
    let d = labels.len();
    let mut rel_dev = DMatrix::zeros(d, d);
    let mut checks = Vec::new();
    for i in 0..d {
        for j in 0..d {
            let t = target[(i, j)];
            let norm = (target[(i, i)] * target[(j, j)]).sqrt();
            rel_dev[(i, j)] = if t != 0.0 { (cov[(i, j)] - t) / t.abs() } else { cov[(i, j)] / norm };
            if j > i {
                continue;
            }
            let tolerance = config.entry_tolerance(i, j);
            let err = (cov[(i, j)] - t).abs();
            let (deviation, limit) = match tolerance {
                Tolerance::Relative(tol) => (err / t.abs(), tol),
                Tolerance::Absolute(tol) => (err, tol),
                Tolerance::Normalized(tol) => (err / norm, tol),
            };
            checks.push(ToleranceCheck {
                entry: (i, j),
                label: format!("cov({},{})", labels[i], labels[j]),
                empirical: cov[(i, j)],
                target: t,
                tolerance,
                deviation,
                pass: deviation <= limit,
            });
        }
    }
    Ok(MCSummary {
        replications: config.replications,
        horizon: config.n,
        labels,
        empirical_mean: mean,
        empirical_cov: to_rows(&cov),
        target_cov: to_rows(&target),
        rel_dev: to_rows(&rel_dev),
        skewness,
        excess_kurtosis,
        failure_count,
        checks,
        rescaled_errors: rows,
        replication_ids: ids,
    })
}

/// Runs the study; more than 5% failed replications is an error.
pub fn run_study(config: &StudyConfig) -> Result<MCSummary> {
    let summary = run_study_unchecked(config)?;
    if summary.failure_budget_exceeded() {
        return Err(Error::TooManyFailures {
            failed: summary.failure_count,
            total: summary.replications,
        });
    }
    Ok(summary)
}

/// Test functions for the ergodic averages of the OU process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Functional {
    Identity,
    Square,
    Abs,
    /// `1{a ≤ x ≤ b}`.
    Indicator(f64, f64),
}

impl Functional {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::Identity => x,
            Self::Square => x * x,
            Self::Abs => x.abs(),
            Self::Indicator(a, b) => f64::from(a <= x && x <= b),
        }
    }

    /// Mean under the invariant law `N(0, c/(2τ))`.
    pub fn invariant_mean(&self, tau: f64, c: f64) -> f64 {
        let var = c / (2.0 * tau);
        match *self {
            Self::Identity => 0.0,
            Self::Square => var,
            Self::Abs => (2.0 * var / std::f64::consts::PI).sqrt(),
            Self::Indicator(a, b) => {
                let sd = var.sqrt();
                normal_cdf(b / sd) - normal_cdf(a / sd)
            }
        }
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

impl FromStr for Functional {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "identity" => return Ok(Self::Identity),
            "square" => return Ok(Self::Square),
            "abs" => return Ok(Self::Abs),
            _ => {}
        }
        let bad = || Error::InvalidParameter(format!("unknown functional `{s}` (identity, square, abs, indicator(a,b))"));
        let inner = s.strip_prefix("indicator(").and_then(|r| r.strip_suffix(')')).ok_or_else(bad)?;
        let (a, b) = inner.split_once(',').ok_or_else(bad)?;
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        if !(a <= b) {
            return Err(Error::InvalidParameter(format!("indicator bounds must satisfy a <= b, got ({a}, {b})")));
        }
        Ok(Self::Indicator(a, b))
    }
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => f.write_str("identity"),
            Self::Square => f.write_str("square"),
            Self::Abs => f.write_str("abs"),
            Self::Indicator(a, b) => write!(f, "indicator({a},{b})"),
        }
    }
}

/// `(ℓ / r^ℓ) ∫_0^r s^{ℓ-1} f(X_s) ds` along one OU path, for each horizon `r`.
#[allow(clippy::too_many_arguments)]
pub fn functional_probe_lemma1(
    tau: f64,
    c: f64,
    x0: f64,
    f: Functional,
    ell: u32,
    horizons: &[f64],
    delta: f64,
    rng: RngSpec,
) -> Result<Vec<(f64, f64)>> {
    if ell == 0 {
        return Err(Error::InvalidParameter("ell must be at least 1".into()));
    }
    let longest = horizons.iter().copied().fold(f64::NAN, f64::max);
    if horizons.is_empty() || !longest.is_finite() {
        return Err(Error::InvalidParameter("need at least one finite horizon".into()));
    }
    let (x, _) = ou_with_increments(tau, c, x0, longest, delta, rng)?;
    let fx: Vec<f64> = x.iter().map(|v| f.eval(*v)).collect();
    horizons
        .iter()
        .map(|&r| {
            let steps = step_count(r, delta)?.min(fx.len() - 1);
            let r_grid = steps as f64 * delta;
            let integral = trapezoid_by(steps + 1, delta, |k| {
                let u = k as f64 / steps as f64;
                u.powi(ell as i32 - 1) * fx[k]
            });
            Ok((r_grid, ell as f64 * integral / r_grid))
        })
        .collect()
}

/// Empirical covariance over `M` paths of `(n^{-(2i+1)/2} ∫_0^n s^i X_s ds)_{i=0..=ℓ}`
/// together with its limit `(c/τ²)[1/(i+j+1)]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma4Probe {
    pub empirical_cov: Vec<Vec<f64>>,
    pub target_cov: Vec<Vec<f64>>,
    pub replications: usize,
    pub horizon: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn functional_probe_lemma4(
    tau: f64,
    c: f64,
    x0: f64,
    ell: usize,
    n: f64,
    replications: usize,
    delta: f64,
    seed: u64,
    workers: usize,
) -> Result<Lemma4Probe> {
    if replications < 2 {
        return Err(Error::InvalidParameter("need at least two replications".into()));
    }
    let rows = run_parallel(workers, replications, |r| -> Result<Vec<f64>> {
        let (x, _) = ou_with_increments(tau, c, x0, n, delta, RngSpec::new(seed, r as u64))?;
        let steps = x.len() - 1;
        let horizon = steps as f64 * delta;
        let du = 1.0 / steps as f64;
        // √n ∫_0^1 u^i X(nu) du
        Ok((0..=ell)
            .map(|i| horizon.sqrt() * trapezoid_by(x.len(), du, |k| (k as f64 * du).powi(i as i32) * x[k]))
            .collect())
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (_, cov) = mean_and_cov(&rows);
    let target = DMatrix::from_fn(ell + 1, ell + 1, |i, j| c / (tau * tau) / (i + j + 1) as f64);
    Ok(Lemma4Probe {
        empirical_cov: to_rows(&cov),
        target_cov: to_rows(&target),
        replications,
        horizon: n,
    })
}
