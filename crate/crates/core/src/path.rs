//! Uniform-grid sample paths.

use crate::error::{Error, Result};

/// Conventional channel names.
pub mod channel {
    pub const Y: &str = "Y";
    pub const X: &str = "X";
    /// Brownian increment over `[t_k, t_{k+1})`; the entry at the final node is zero.
    pub const DW: &str = "dW";
    pub const V: &str = "V";
    pub const N: &str = "n";
    pub const M: &str = "m";
    pub const H: &str = "h";
    pub const ZETA: &str = "zeta";
}

/// Time series on the grid `t_k = k * delta`, `k = 0..=N`, with one or more
/// named channels of equal length `N + 1 >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    delta: f64,
    names: Vec<String>,
    data: Vec<Vec<f64>>,
}

impl SamplePath {
    pub fn new(delta: f64, channels: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidPath(format!("grid step must be positive, got {delta}")));
        }
        let mut path = Self {
            delta,
            names: Vec::with_capacity(channels.len()),
            data: Vec::with_capacity(channels.len()),
        };
        if channels.is_empty() {
            return Err(Error::InvalidPath("a path needs at least one channel".into()));
        }
        for (name, values) in channels {
            path.push(name, values)?;
        }
        Ok(path)
    }

    /// One-channel path.
    pub fn single(delta: f64, name: &str, values: Vec<f64>) -> Result<Self> {
        Self::new(delta, vec![(name.to_string(), values)])
    }

    /// Adds a channel; it must match the existing length and hold finite values.
    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if values.len() < 2 {
            return Err(Error::InvalidPath(format!("channel `{name}` has fewer than two nodes")));
        }
        if let Some(first) = self.data.first() {
            if first.len() != values.len() {
                return Err(Error::InvalidPath(format!(
                    "channel `{name}` has {} nodes, expected {}",
                    values.len(),
                    first.len()
                )));
            }
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidPath(format!("channel `{name}` is not finite at node {k}")));
        }
        if self.names.contains(&name) {
            return Err(Error::InvalidPath(format!("duplicate channel `{name}`")));
        }
        self.names.push(name);
        self.data.push(values);
        Ok(())
    }

    pub fn with_channel(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        self.push(name, values)?;
        Ok(self)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Number of grid nodes, `N + 1`.
    pub fn len(&self) -> usize {
        self.data[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.delta
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.delta
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    pub fn channel_names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn has_channel(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    pub fn channel(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.data[i].as_slice())
            .ok_or_else(|| Error::MissingChannel(name.to_string()))
    }

    /// Path restricted to `[0, steps * delta]`.
    pub fn prefix(&self, steps: usize) -> Result<Self> {
        if steps == 0 || steps > self.steps() {
            return Err(Error::InvalidPath(format!(
                "cannot take {steps} steps of a path with {} steps",
                self.steps()
            )));
        }
        let mut data: Vec<Vec<f64>> = self.data.iter().map(|c| c[..=steps].to_vec()).collect();
        if let Some(i) = self.names.iter().position(|n| n == channel::DW) {
            data[i][steps] = 0.0;
        }
        Ok(Self {
            delta: self.delta,
            names: self.names.clone(),
            data,
        })
    }

    /// Checks that `other` lives on the same grid.
    pub fn same_grid(&self, other: &SamplePath) -> Result<()> {
        if self.len() != other.len() || self.delta != other.delta {
            return Err(Error::GridMismatch(format!(
                "({} nodes, step {}) vs ({} nodes, step {})",
                self.len(),
                self.delta,
                other.len(),
                other.delta
            )));
        }
        Ok(())
    }
}

/// Number of grid steps covering `horizon` at step `delta`.
pub fn step_count(horizon: f64, delta: f64) -> Result<usize> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidParameter(format!("grid step must be positive, got {delta}")));
    }
    if !(horizon.is_finite() && horizon >= delta) {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} must be finite and at least one grid step ({delta})"
        )));
    }
    let steps = (horizon / delta).round();
    if steps > 1e9 {
        return Err(Error::InvalidParameter(format!("{steps} grid steps is too many")));
    }
    Ok(steps as usize)
}
