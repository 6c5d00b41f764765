//! Stochastic Hodgkin-Huxley neuron driven by accumulated OU input.
//!
//! State `(V, n, m, h, Y)` with `Y_t = ϑt + X_t` and
//!
//! ```text
//! dV = dY - F(V, n, m, h) dt
//! dj = [α_j(V)(1 - j) - β_j(V) j] dt,   j ∈ {n, m, h}
//! ```
//!
//! Classical squid-axon rates in the shifted-voltage convention (rest at
//! 0 mV), time in ms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ou::OuTransition;
use crate::path::{channel, step_count, SamplePath};
use crate::rng::RngSpec;

/// Largest grid step (ms) accepted by [`simulate_hh`].
pub const MAX_DELTA: f64 = 0.05;

/// Default grid step (ms).
pub const DEFAULT_DELTA: f64 = 0.01;

/// Fixed-point sweeps applied to the trapezoidal voltage update.
pub const CORRECTOR_SWEEPS: usize = 10;

/// Membrane constants: conductances in mS/cm², reversal potentials in mV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Membrane {
    pub g_na: f64,
    pub g_k: f64,
    pub g_l: f64,
    pub e_na: f64,
    pub e_k: f64,
    pub e_l: f64,
}

impl Default for Membrane {
    fn default() -> Self {
        Self {
            g_na: 120.0,
            g_k: 36.0,
            g_l: 0.3,
            e_na: 120.0,
            e_k: -12.0,
            e_l: 10.6,
        }
    }
}

impl Membrane {
    pub fn validate(&self) -> Result<()> {
        let g = [self.g_na, self.g_k, self.g_l];
        if g.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidParameter(format!("conductances must be nonnegative: {g:?}")));
        }
        let e = [self.e_na, self.e_k, self.e_l];
        if e.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("reversal potentials must be finite".into()));
        }
        Ok(())
    }

    /// Ionic current `F = g_K n⁴(V - E_K) + g_Na m³h(V - E_Na) + g_L(V - E_L)`.
    #[inline]
    pub fn current(&self, v: f64, n: f64, m: f64, h: f64) -> f64 {
        let n2 = n * n;
        self.g_k * n2 * n2 * (v - self.e_k) + self.g_na * m * m * m * h * (v - self.e_na) + self.g_l * (v - self.e_l)
    }
}

/// Input parameters `(ϑ, τ, c)` plus membrane constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HHParams {
    pub theta: f64,
    pub tau: f64,
    pub c: f64,
    pub membrane: Membrane,
}

impl HHParams {
    /// `c = 0` gives the deterministic system with constant input rate `ϑ`.
    pub fn new(theta: f64, tau: f64, c: f64) -> Result<Self> {
        let p = Self {
            theta,
            tau,
            c,
            membrane: Membrane::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_membrane(mut self, membrane: Membrane) -> Result<Self> {
        self.membrane = membrane;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(Error::OutsideParameterSpace(format!("theta must be positive, got {}", self.theta)));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::OutsideParameterSpace(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.c.is_finite() && self.c >= 0.0) {
            return Err(Error::InvalidParameter(format!("c must be nonnegative, got {}", self.c)));
        }
        self.membrane.validate()
    }

    pub fn ionic_current(&self, state: &HHState) -> f64 {
        self.membrane.current(state.v, state.n, state.m, state.h)
    }
}

/// A point `(V, n, m, h, Y)` of the state space `ℝ × [0,1]³ × ℝ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HHState {
    pub v: f64,
    pub n: f64,
    pub m: f64,
    pub h: f64,
    pub y: f64,
}

impl HHState {
    /// Gating variables at their steady state for `v`, input `y`.
    pub fn at_rest(v: f64, y: f64) -> Self {
        let r = rate_functions(v);
        Self {
            v,
            n: r.n_inf(),
            m: r.m_inf(),
            h: r.h_inf(),
            y,
        }
    }

    pub fn gating(&self) -> [f64; 3] {
        [self.n, self.m, self.h]
    }

    pub fn is_interior(&self) -> bool {
        self.v.is_finite()
            && self.y.is_finite()
            && self.gating().iter().all(|j| *j > 0.0 && *j < 1.0)
    }
}

impl Default for HHState {
    fn default() -> Self {
        Self::at_rest(0.0, 0.0)
    }
}

/// `x / (e^x - 1)`, continuous through `x = 0`.
#[inline]
pub fn exprel_inv(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - 0.5 * x + x2 / 12.0 - x2 * x2 / 720.0
    } else {
        x / x.exp_m1()
    }
}

/// Opening and closing rates (1/ms) of the three gates at potential `V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub alpha_n: f64,
    pub beta_n: f64,
    pub alpha_m: f64,
    pub beta_m: f64,
    pub alpha_h: f64,
    pub beta_h: f64,
}

impl Rates {
    pub fn n_inf(&self) -> f64 {
        self.alpha_n / (self.alpha_n + self.beta_n)
    }

    pub fn m_inf(&self) -> f64 {
        self.alpha_m / (self.alpha_m + self.beta_m)
    }

    pub fn h_inf(&self) -> f64 {
        self.alpha_h / (self.alpha_h + self.beta_h)
    }

    /// `(α, β)` for gate 0 = n, 1 = m, 2 = h.
    pub fn pair(&self, gate: usize) -> (f64, f64) {
        match gate {
            0 => (self.alpha_n, self.beta_n),
            1 => (self.alpha_m, self.beta_m),
            _ => (self.alpha_h, self.beta_h),
        }
    }
}

pub fn rate_functions(v: f64) -> Rates {
    Rates {
        alpha_n: 0.1 * exprel_inv((10.0 - v) / 10.0),
        beta_n: 0.125 * (-v / 80.0).exp(),
        alpha_m: exprel_inv((25.0 - v) / 10.0),
        beta_m: 4.0 * (-v / 18.0).exp(),
        alpha_h: 0.07 * (-v / 20.0).exp(),
        beta_h: 1.0 / (((30.0 - v) / 10.0).exp() + 1.0),
    }
}

pub fn ionic_current(state: &HHState, params: &HHParams) -> f64 {
    params.ionic_current(state)
}

/// Rush-Larsen step: exact solution of `dj = [α(1-j) - βj] dt` with rates
/// frozen over the step. Stays in `[0, 1]`.
#[inline]
pub fn gating_step(j: f64, alpha: f64, beta: f64, delta: f64) -> f64 {
    let s = alpha + beta;
    let j_inf = alpha / s;
    (j_inf + (j - j_inf) * (-s * delta).exp()).clamp(0.0, 1.0)
}

/// Advances `(n, m, h)` over one step with rates evaluated at `v`.
#[inline]
pub fn advance_gating(gating: [f64; 3], v: f64, delta: f64) -> [f64; 3] {
    let r = rate_functions(v);
    [
        gating_step(gating[0], r.alpha_n, r.beta_n, delta),
        gating_step(gating[1], r.alpha_m, r.beta_m, delta),
        gating_step(gating[2], r.alpha_h, r.beta_h, delta),
    ]
}

/// Simulates the stochastic Hodgkin-Huxley system on `[0, horizon]` ms.
///
/// `Y` uses the exact OU transition with `X_0 = Y_0 = init.y`. `V` follows
/// the trapezoidal rule `V_{k+1} = V_k + ΔY_k - ½(F_k + F_{k+1})Δ`, solved by
/// [`CORRECTOR_SWEEPS`] fixed-point sweeps from an Euler predictor. Gates take
/// a Rush-Larsen step with rates at the midpoint `½(V_k + V_{k+1})`, so they
/// depend on the voltage path alone.
///
/// Channels: `V, n, m, h, Y, X` and `dW` when `c > 0`.
pub fn simulate_hh(params: &HHParams, init: &HHState, horizon: f64, delta: f64, rng: RngSpec) -> Result<SamplePath> {
    params.validate()?;
    if !init.is_interior() {
        return Err(Error::InvalidParameter(format!(
            "initial state must lie in the interior of the state space: {init:?}"
        )));
    }
    if !(delta > 0.0 && delta <= MAX_DELTA) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, {MAX_DELTA}] ms, got {delta}")));
    }
    let steps = step_count(horizon, delta)?;
    let transition = OuTransition::new(params.tau, params.c, delta)?;
    let mut rng = rng.rng();
    let mem = params.membrane;

    let mut cols: [Vec<f64>; 7] = std::array::from_fn(|_| Vec::with_capacity(steps + 1));
    let [vs, ns, ms, hs, ys, xs, dws] = &mut cols;

    let (mut v, mut gate, mut x) = (init.v, init.gating(), init.y);
    let mut y = init.y;
    vs.push(v);
    ns.push(gate[0]);
    ms.push(gate[1]);
    hs.push(gate[2]);
    ys.push(y);
    xs.push(x);
    for k in 0..steps {
        let (x_next, dw) = transition.step(x, &mut rng);
        let y_next = params.theta * ((k + 1) as f64 * delta) + x_next;
        let dy = y_next - y;
        let f0 = mem.current(v, gate[0], gate[1], gate[2]);
        let mut v_next = v + dy - f0 * delta;
        for _ in 0..CORRECTOR_SWEEPS {
            let g = advance_gating(gate, 0.5 * (v + v_next), delta);
            let f1 = mem.current(v_next, g[0], g[1], g[2]);
            v_next = v + dy - 0.5 * (f0 + f1) * delta;
        }
        if !v_next.is_finite() {
            return Err(Error::InvalidPath(format!("membrane potential diverged at step {k}")));
        }
        gate = advance_gating(gate, 0.5 * (v + v_next), delta);
        v = v_next;
        x = x_next;
        y = y_next;
        vs.push(v);
        ns.push(gate[0]);
        ms.push(gate[1]);
        hs.push(gate[2]);
        ys.push(y);
        xs.push(x);
        dws.push(dw);
    }
    dws.push(0.0);

    let [vs, ns, ms, hs, ys, xs, dws] = cols;
    let mut path = SamplePath::new(
        delta,
        vec![
            (channel::V.into(), vs),
            (channel::N.into(), ns),
            (channel::M.into(), ms),
            (channel::H.into(), hs),
            (channel::Y.into(), ys),
            (channel::X.into(), xs),
        ],
    )?;
    if params.c > 0.0 {
        path.push(channel::DW, dws)?;
    }
    Ok(path)
}

/// Number of upward crossings of `level` by `v[from..]`.
pub fn count_upward_crossings(v: &[f64], level: f64, from: usize) -> usize {
    v.get(from..)
        .unwrap_or(&[])
        .windows(2)
        .filter(|w| w[0] < level && w[1] >= level)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn removable_singularity() {
        // series of x/(e^x-1) at 0: 1 - x/2 + x²/12
        assert_eq!(exprel_inv(0.0), 1.0);
        assert!((rate_functions(10.0).alpha_n - 0.1).abs() < 1e-15);
        assert!((rate_functions(25.0).alpha_m - 1.0).abs() < 1e-15);
        for &x in &[1e-5, -1e-5, 1e-4 * 0.999, 2e-4, -3e-4] {
            let series = 1.0 - x / 2.0 + x * x / 12.0;
            assert!((exprel_inv(x) - series).abs() < 1e-12, "x={x}");
        }
        // continuity across the switch
        let below = exprel_inv(0.99999e-4);
        let above = exprel_inv(1.00001e-4);
        assert!((below - above).abs() < 1e-9);
    }

    #[test]
    fn classical_rate_values() {
        let r0 = rate_functions(0.0);
        assert!((r0.alpha_h - 0.07).abs() < 1e-15);
        assert!((rate_functions(30.0).beta_h - 0.5).abs() < 1e-15);
        assert!((r0.beta_n - 0.125).abs() < 1e-15);
        assert!((r0.beta_m - 4.0).abs() < 1e-15);
        assert!((r0.alpha_n - 0.1 / (1f64.exp() - 1.0)).abs() < 1e-15);
        assert!((r0.alpha_m - 2.5 / (2.5f64.exp() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn rates_are_nonnegative() {
        for i in 0..=3000 {
            let v = -100.0 + 0.1 * i as f64;
            let r = rate_functions(v);
            for g in 0..3 {
                let (a, b) = r.pair(g);
                assert!(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite(), "v={v}");
            }
        }
    }

    #[test]
    fn ionic_current_examples() {
        let p = HHParams::new(1.0, 1.0, 1.0).unwrap();
        let mem = p.membrane;
        let s = HHState { v: 37.0, n: 0.0, m: 0.0, h: 0.0, y: 0.0 };
        assert!((ionic_current(&s, &p) - mem.g_l * (37.0 - mem.e_l)).abs() < 1e-12);

        let same = Membrane { e_na: 5.0, e_k: 5.0, e_l: 5.0, ..mem };
        let p2 = p.with_membrane(same).unwrap();
        let s = HHState { v: 5.0, n: 0.3, m: 0.6, h: 0.2, y: 0.0 };
        assert_eq!(ionic_current(&s, &p2), 0.0);

        // resting gates from the fixed point j∞ = α/(α+β) at V = 0
        let r = rate_functions(0.0);
        let (n, m, h) = (r.alpha_n / (r.alpha_n + r.beta_n), r.alpha_m / (r.alpha_m + r.beta_m), r.alpha_h / (r.alpha_h + r.beta_h));
        assert!((n - 0.3177).abs() < 1e-4 && (m - 0.0529).abs() < 1e-4 && (h - 0.5961).abs() < 1e-4);
        let s = HHState { v: 0.0, n, m, h, y: 0.0 };
        let expect = 36.0 * n.powi(4) * 12.0 + 120.0 * m.powi(3) * h * (-120.0) + 0.3 * (-10.6);
        assert!((ionic_current(&s, &p) - expect).abs() < 1e-12);
        assert!(ionic_current(&s, &p).abs() < 0.1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = HHParams::new(6.0, 1.0, 1.0).unwrap();
        let r = RngSpec::new(0, 0);
        let boundary = HHState { n: 0.0, ..HHState::default() };
        assert!(simulate_hh(&p, &boundary, 10.0, 0.01, r).is_err());
        assert!(simulate_hh(&p, &HHState::default(), 10.0, 0.06, r).is_err());
        assert!(HHParams::new(0.0, 1.0, 1.0).is_err());
        assert!(HHParams::new(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn input_channel_decomposes() {
        let p = HHParams::new(6.0, 1.0, 1.0).unwrap();
        let path = simulate_hh(&p, &HHState::default(), 50.0, 0.01, RngSpec::new(4, 0)).unwrap();
        let (y, x) = (path.channel(channel::Y).unwrap(), path.channel(channel::X).unwrap());
        for k in 0..path.len() {
            assert!((y[k] - x[k] - 6.0 * path.time(k)).abs() < 1e-10);
        }
    }

    #[test]
    fn gating_stays_in_unit_interval() {
        let p = HHParams::new(6.0, 1.0, 1.0).unwrap();
        let path = simulate_hh(&p, &HHState::default(), 10_000.0, 0.01, RngSpec::new(8, 0)).unwrap();
        assert_eq!(path.steps(), 1_000_000);
        for name in [channel::N, channel::M, channel::H] {
            assert!(path.channel(name).unwrap().iter().all(|j| (0.0..=1.0).contains(j)), "{name}");
        }
    }

    #[test]
    fn quiet_regime_below_bistability() {
        let p = HHParams::new(2.0, 1.0, 0.0).unwrap();
        let path = simulate_hh(&p, &HHState::default(), 200.0, 0.01, RngSpec::new(0, 0)).unwrap();
        let v = path.channel(channel::V).unwrap();
        assert_eq!(count_upward_crossings(v, 50.0, 5000), 0);
    }

    #[test]
    fn periodic_spiking_regime() {
        let p = HHParams::new(10.0, 1.0, 0.0).unwrap();
        let path = simulate_hh(&p, &HHState::default(), 200.0, 0.001, RngSpec::new(0, 0)).unwrap();
        let v = path.channel(channel::V).unwrap();
        let spikes = count_upward_crossings(v, 50.0, 0);
        assert!(spikes >= 8, "spikes={spikes}");
    }

    #[test]
    fn deterministic_self_convergence() {
        let p = HHParams::new(10.0, 1.0, 0.0).unwrap();
        let coarse = simulate_hh(&p, &HHState::default(), 100.0, 0.01, RngSpec::new(0, 0)).unwrap();
        let fine = simulate_hh(&p, &HHState::default(), 100.0, 0.002, RngSpec::new(0, 0)).unwrap();
        let (vc, vf) = (coarse.channel(channel::V).unwrap(), fine.channel(channel::V).unwrap());
        let worst = (0..vc.len()).map(|k| (vc[k] - vf[5 * k]).abs()).fold(0.0, f64::max);
        assert!(worst <= 0.5, "sup |V_0.01 - V_0.002| = {worst}");
    }
}
