use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("power iteration did not converge after {iterations} iterations (last residual {last_residual:.3e}); possible periodicity or decomposability")]
    NonConvergent {
        iterations: usize,
        last_residual: f64,
        /// Log growth factors of the last iterations, oldest first.
        growth_factors: Vec<f64>,
    },

    #[error("no admissible (x0, r0): {0}")]
    NoAdmissibleRadius(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("K too large for horizon tau: level {required} required, cap is {cap}")]
    LevelCap { required: usize, cap: usize },

    #[error("hypothesis check failed: {0}")]
    CheckFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
