use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: expected {expected} samples, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    /// The requested operation has no meaning in the current parameter regime.
    #[error("regime error: {0}")]
    Regime(String),

    #[error("bracket failure: {message} (last bracket [{lo}, {hi}])")]
    Bracket { message: String, lo: f64, hi: f64 },

    #[error("no convergence after {iterations} iterations: {message}")]
    NonConvergence { iterations: usize, message: String },

    /// A computed structure contradicts what the theory guarantees in-regime.
    #[error("structural anomaly: {0}")]
    StructuralAnomaly(String),

    #[error("mass constraint violated: expected {expected}, got {got}")]
    MassViolation { expected: f64, got: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    /// Stable machine-readable tag, used in error documents.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::Regime(_) => "regime",
            Error::Bracket { .. } => "bracket_failure",
            Error::NonConvergence { .. } => "non_convergence",
            Error::StructuralAnomaly(_) => "structural_anomaly",
            Error::MassViolation { .. } => "mass_violation",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Format(_) => "format",
        }
    }

    /// Usage errors are malformed requests; everything else is a domain failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_) | Error::ShapeMismatch { .. } | Error::Io(_) | Error::Json(_) | Error::Format(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
