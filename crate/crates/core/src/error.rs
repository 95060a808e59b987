use thiserror::Error;

use crate::traffic::FixedPointReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter violates its documented range or a structural invariant.
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The handover-rate fixed point was not reached; the report carries the
    /// last iterate and its residual.
    #[error(
        "handover rate did not converge after {} iterations (residual {:e})",
        .0.iterations,
        .0.residual
    )]
    NonConvergence(Box<FixedPointReport>),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
