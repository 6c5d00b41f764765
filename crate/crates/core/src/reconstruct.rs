//! Recovery of the latent gating variables and the accumulated input from
//! an observed membrane-potential path.

use crate::error::{Error, Result};
use crate::hh::{advance_gating, HHParams, HHState, Membrane};
use crate::path::{channel, SamplePath};

/// Integrates `dj = [α_j(V)(1 - j) - β_j(V) j] dt` along the `V` channel with
/// the same exponential step as the simulator, so a simulated `V` channel
/// reproduces the simulated gates exactly.
///
/// Returns a path with channels `n, m, h`.
pub fn reconstruct_gating(v_path: &SamplePath, j0: [f64; 3]) -> Result<SamplePath> {
    if j0.iter().any(|j| !(*j > 0.0 && *j < 1.0)) {
        return Err(Error::InvalidParameter(format!("initial gating values must lie in (0, 1): {j0:?}")));
    }
    let v = v_path.channel(channel::V)?;
    let delta = v_path.delta();
    let mut cols: [Vec<f64>; 3] = std::array::from_fn(|i| {
        let mut c = Vec::with_capacity(v.len());
        c.push(j0[i]);
        c
    });
    let mut gate = j0;
    for w in v.windows(2) {
        gate = advance_gating(gate, 0.5 * (w[0] + w[1]), delta);
        for (col, j) in cols.iter_mut().zip(gate) {
            col.push(j);
        }
    }
    let [n, m, h] = cols;
    SamplePath::new(
        delta,
        vec![(channel::N.into(), n), (channel::M.into(), m), (channel::H.into(), h)],
    )
}

/// `ζ_t = Y_0 + (V_t - V_0) + ∫_0^t F(V_s, n̆_s, m̆_s, h̆_s) ds`, trapezoid rule.
///
/// Returns a path with channels `zeta, n, m, h`.
pub fn reconstruct_input(v_path: &SamplePath, init: &HHState, params: &HHParams) -> Result<SamplePath> {
    params.validate()?;
    reconstruct_input_with(v_path, init, &params.membrane)
}

/// [`reconstruct_input`] given only the membrane constants, which are all
/// the reconstruction uses.
pub fn reconstruct_input_with(v_path: &SamplePath, init: &HHState, mem: &Membrane) -> Result<SamplePath> {
    mem.validate()?;
    if !init.is_interior() {
        return Err(Error::InvalidParameter(format!(
            "initial state must lie in the interior of the state space: {init:?}"
        )));
    }
    let gating = reconstruct_gating(v_path, init.gating())?;
    let v = v_path.channel(channel::V)?;
    let (n, m, h) = (
        gating.channel(channel::N)?,
        gating.channel(channel::M)?,
        gating.channel(channel::H)?,
    );
    let delta = v_path.delta();
    let mut zeta = Vec::with_capacity(v.len());
    let mut f_prev = mem.current(v[0], n[0], m[0], h[0]);
    let mut acc = 0.0;
    zeta.push(init.y);
    for k in 1..v.len() {
        let f = mem.current(v[k], n[k], m[k], h[k]);
        acc += 0.5 * delta * (f_prev + f);
        f_prev = f;
        zeta.push(init.y + (v[k] - v[0]) + acc);
    }
    SamplePath::new(
        delta,
        vec![
            (channel::ZETA.into(), zeta),
            (channel::N.into(), n.to_vec()),
            (channel::M.into(), m.to_vec()),
            (channel::H.into(), h.to_vec()),
        ],
    )
}
