use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: a plate, spectrum, config or argument that violates
    /// its invariants.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A quantity outside its mathematical domain (zero spectrum, unphysical
    /// beam narrowing, empty curve, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A quadrature or grid check that did not meet its tolerance.
    #[error("convergence failure: {what} (coarse {coarse:.3e}, refined {refined:.3e}, tolerance {tolerance:.1e})")]
    Convergence {
        what: String,
        coarse: f64,
        refined: f64,
        tolerance: f64,
    },

    /// Monte Carlo calibration check failed (screen statistics, grid resolution).
    #[error("calibration failure: {0}")]
    Calibration(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
