use thiserror::Error;

/// Errors raised by the evidence, selection and averaging routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvidenceError {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A matrix expected to be symmetric positive definite is not.
    #[error("decomposition failed for {what}: {reason}")]
    Decomposition { what: String, reason: String },

    /// A regression problem is not identifiable from the data at hand.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// Array shapes disagree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Scan partitioning is impossible.
    #[error("layout error: {0}")]
    Layout(String),

    /// An iterative or quadrature scheme failed to converge.
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl EvidenceError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Self::Domain(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Self::Dimension(msg.into())
    }

    pub(crate) fn decomposition(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Decomposition {
            what: what.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, EvidenceError>;
