use thiserror::Error;

/// Errors produced by kernel evaluation, weight diagnostics and bound fitting.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument violates an operation's precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A point or cube lies outside where the potential is defined or integrable.
    #[error("domain error: {0}")]
    Domain(String),

    /// Geometric precondition failed (e.g. a segment leaves the admissible ball).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// An iterative refinement did not reach its tolerance.
    #[error("no convergence: {message}; trace: {trace:?}")]
    Convergence { message: String, trace: Vec<f64> },

    /// The ODE integrator failed; `last_t` is the last accepted time.
    #[error("integration failed at t = {last_t}: {message}")]
    Integration { last_t: f64, message: String },

    /// Adaptive quadrature exhausted its subdivision budget.
    #[error("quadrature did not converge on [{a}, {b}]: estimated error {error:e}")]
    Quadrature { a: f64, b: f64, error: f64 },

    /// Configuration could not be parsed or validated.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
