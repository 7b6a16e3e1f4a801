//! Error type shared by all modules.

use thiserror::Error;

/// Errors produced by construction, assembly, and evaluation routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A scalar parameter is outside its admissible range.
    #[error("invalid parameter {name}: {message}")]
    Parameter { name: &'static str, message: String },

    /// Matrix dimensions do not match the requested operation.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A spectral function was evaluated outside its domain.
    #[error("function undefined at eigenvalue {eigenvalue} (index {index}): {message}")]
    Domain {
        eigenvalue: f64,
        index: usize,
        message: String,
    },

    /// A matrix that must be hermitian is too far from hermitian.
    #[error("matrix is not hermitian: relative asymmetry {asymmetry:.3e} exceeds {limit:.3e}")]
    NotHermitian { asymmetry: f64, limit: f64 },

    /// The eigensolver failed to converge.
    #[error("eigensolver failed to converge for dimension {dim} (condition estimate {condition:.3e})")]
    Eigensolver { dim: usize, condition: f64 },

    /// A quadrature or iteration did not reach the requested accuracy.
    #[error("accuracy target {requested:.3e} not reached in {context}: achieved {achieved:.3e}")]
    Accuracy {
        context: &'static str,
        requested: f64,
        achieved: f64,
    },

    /// A configured resource cap would be exceeded.
    #[error("resource cap exceeded in {context}: {requested} > cap {cap}")]
    Resource {
        context: &'static str,
        requested: usize,
        cap: usize,
    },

    /// Invalid model or discretization configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A resolvent guard condition failed (family not invertible at the
    /// requested shift).
    #[error("resolvent guard violated: {message} (required lambda > {required:.6e})")]
    Guard { message: String, required: f64 },

    /// A path endpoint has an eigenvalue pinned at zero.
    #[error("degenerate path endpoint: eigenvalue {eigenvalue:.3e} within margin {margin:.3e} of zero")]
    DegenerateEndpoint { eigenvalue: f64, margin: f64 },
}

impl Error {
    pub(crate) fn parameter(name: &'static str, message: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            message: message.into(),
        }
    }
}
