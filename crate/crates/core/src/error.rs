use thiserror::Error;

/// Errors raised by the matching toolkit.
#[derive(Debug, Error)]
pub enum FrgmError {
    /// An argument is outside its documented domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// Geometry that admits no triangulation (collinear or too few points).
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    /// An exhaustive routine was asked for an instance above its size guard.
    #[error("size guard exceeded: {0}")]
    SizeGuard(String),
    /// A solver produced a non-finite value or a singular system.
    #[error("numerical failure: {message}")]
    Numerical {
        message: String,
        /// Flattened row-major iterate at the point of failure, when available.
        iterate: Option<Vec<f64>>,
    },
    #[error("input error: {0}")]
    Input(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FrgmError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        FrgmError::Parameter(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        FrgmError::Numerical {
            message: msg.into(),
            iterate: None,
        }
    }
}

pub type Result<T> = std::result::Result<T, FrgmError>;
