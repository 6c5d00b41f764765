use thiserror::Error;

/// Errors raised by the simulation and inference routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("missing channel `{0}`")]
    MissingChannel(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("polynomial degree {degree} exceeds the supported maximum {max}")]
    DegreeTooLarge { degree: usize, max: usize },

    #[error("scaled normal equations are ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),

    #[error("nonpositive estimator denominator ({0:.6e})")]
    DegenerateDenominator(f64),

    #[error("diffusion constants differ ({0} vs {1}); c is known and not a parameter")]
    DiffusionMismatch(f64, f64),

    #[error("parameter outside the admissible set: {0}")]
    OutsideParameterSpace(String),

    #[error("{failed} of {total} replications failed (more than 5%)")]
    TooManyFailures { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
