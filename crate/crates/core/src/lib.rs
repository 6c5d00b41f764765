//! Simulation and inference for polynomial trends observed under
//! Ornstein-Uhlenbeck noise, with an application to a stochastic
//! Hodgkin-Huxley neuron observed through its membrane potential.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod hh;
pub mod likelihood;
pub mod model;
pub mod montecarlo;
pub mod ou;
pub mod path;
pub mod quadrature;
pub mod reconstruct;
pub mod rng;

pub use error::{Error, Result};
pub use path::SamplePath;
pub use rng::RngSpec;
