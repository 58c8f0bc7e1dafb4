use thiserror::Error;

/// Errors raised by the model, the integrators and the analysis layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("silicon ordering violated between atoms {0} and {1}")]
    Ordering(usize, usize),
    #[error("copper left the resolved block: {0}")]
    BasinLoss(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("singular or indefinite matrix in {0}")]
    Singular(&'static str),
    #[error("step {step} failed: {source}")]
    StepFailure { step: usize, source: Box<Error> },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("insufficient data: {0}")]
    NoData(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Unwraps a step failure to the underlying cause.
    pub fn root(&self) -> &Error {
        match self {
            Error::StepFailure { source, .. } => source.root(),
            e => e,
        }
    }
}
