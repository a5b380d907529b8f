use thiserror::Error;

/// Errors raised by the sampler, planners and oracles.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("planning failed: {0}")]
    Planning(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite state in chain {chain} at step {step}")]
    NonFinite { chain: usize, step: u64 },

    #[error("unstable step size: h = {h} with largest curvature {curvature} (need h * L < 2)")]
    Unstable { h: f64, curvature: f64 },

    #[error("singular covariance")]
    SingularCovariance,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("grid: {0}")]
    Grid(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
