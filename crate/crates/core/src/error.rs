use thiserror::Error;

/// Errors raised by field, kernel and estimator operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("derivative order {order} exceeds the supported maximum {max}")]
    OrderUnsupported { order: usize, max: usize },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument {0} is outside the open interval (0, 1)")]
    DomainError(f64),

    #[error("normal equations are ill-conditioned (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("event not applicable: {0}")]
    InvalidEvent(String),

    #[error("eigen-solver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("Cameron-Martin inner product {inner} disagrees with kernel entry {kernel}")]
    CmMismatch { inner: f64, kernel: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
