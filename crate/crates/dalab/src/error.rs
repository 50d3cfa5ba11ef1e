use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported spectrum: {0}")]
    UnsupportedSpectrum(String),
    #[error("not partially hyperbolic: theta = {0}")]
    NotPartiallyHyperbolic(f64),
    #[error("constraint violated: {what} (measured {measured}, cap {cap})")]
    ConstraintViolation {
        what: String,
        measured: f64,
        cap: f64,
    },
    #[error("target differential too far from identity: distance {distance} exceeds {limit}")]
    OutOfNeighborhood { distance: f64, limit: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("cone family not invariant: {0}")]
    ConeNotInvariant(String),
    #[error("no convergence after {iterations} iterations, residual trace tail {trace:?}")]
    NoConvergence { iterations: usize, trace: Vec<f64> },
    #[error("corrector diverged at node {node:?}: {reason}")]
    CorrectorDivergence { node: (usize, usize), reason: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
