use thiserror::Error;

/// Failure modes of the numerical pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point outside the admissible domain: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numerics(String),

    #[error("orbit does not close: 2π-return misses by {error:.3e} (tolerance {tol:.3e})")]
    Closure { error: f64, tol: f64 },

    #[error("tangent map is singular at t = {t:.6}")]
    SingularTangent { t: f64 },

    #[error("no return to the section through the base point within t = {t_max:.6}")]
    NoReturn { t_max: f64 },

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("sampling failed: {0}")]
    Sampling(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numerics(format!("{what} is not finite ({value})")))
    }
}
