//! Error type shared by every module of the lab.

use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LabError {
    /// A generative-model or configuration parameter is outside its domain.
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    /// The noise covariance is singular (|c| = 1) but the operation needs its inverse.
    #[error("noise covariance is singular at c = {c}; operation requires |c| < 1")]
    SingularCovariance { c: f64 },

    /// The operation is only defined for the base model without signal leakage.
    #[error("operation requires epsilon = 0 (got {epsilon})")]
    RequiresBaseModel { epsilon: f64 },

    #[error("feature index must be 1 or 2 (got {0})")]
    InvalidFeature(usize),

    #[error("requested sample count must be at least 1")]
    EmptyRequest,

    /// Integrated gradients with the baseline equal to the instance.
    #[error("integration path is degenerate: instance equals baseline")]
    DegeneratePath,

    #[error("unknown figure id '{0}'")]
    UnknownFigure(String),

    #[error("unknown method '{0}'")]
    UnknownMethod(String),

    /// Too few Monte-Carlo samples fell into a conditioning band.
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Numerical(_) | LabError::InsufficientSamples(_) => 3,
            _ => 2,
        }
    }
}
