//! Crate-wide error type.

use std::fmt;

/// Errors surfaced by rollouts, estimators, and the experiment tooling.
#[derive(Debug, Clone)]
pub enum Error {
    /// A vector or matrix had the wrong length/shape for the operation.
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    /// An input contained NaN or infinite entries.
    NonFinite { context: &'static str },
    /// A rollout produced a non-finite state at the given step.
    Diverged { step: usize, sample: Option<usize> },
    /// A per-step policy was queried outside its horizon.
    StepOutOfRange { step: usize, horizon: usize },
    /// A gradient update produced non-finite parameters.
    NanGradient { iteration: usize },
    /// Training stopped early; the cause keeps its own detail (for
    /// divergence, the failing step and sample index).
    Aborted { iteration: usize, cause: Box<Error> },
    /// Configuration file failed to parse or validate.
    InvalidConfig(String),
    /// Filesystem failure while reading configs or writing outputs.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                context,
                expected,
                actual,
            } => write!(
                f,
                "dimension mismatch in {context}: expected {expected}, got {actual}"
            ),
            Error::NonFinite { context } => write!(f, "non-finite value in {context}"),
            Error::Diverged { step, sample } => match sample {
                Some(i) => write!(f, "rollout diverged at step {step} (sample {i})"),
                None => write!(f, "rollout diverged at step {step}"),
            },
            Error::StepOutOfRange { step, horizon } => {
                write!(f, "step index {step} out of range for horizon {horizon}")
            }
            Error::NanGradient { iteration } => {
                write!(f, "non-finite gradient at iteration {iteration}")
            }
            Error::Aborted { iteration, cause } => {
                write!(f, "training aborted at iteration {iteration}: {cause}")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Error::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
