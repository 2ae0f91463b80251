use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("point is {distance:e} away from the manifold (tolerance {tolerance:e})")]
    OffManifold { distance: f64, tolerance: f64 },
    #[error("point is {distance:e} away from the manifold, beyond the capture radius {radius:e}")]
    CaptureRadiusExceeded { distance: f64, radius: f64 },
    #[error("expected a vector of length {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("index {index} out of range for ambient dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("vector is not tangent at the base point (normal component {normal:e})")]
    NotTangent { normal: f64 },
    #[error("non-finite value encountered while evaluating {0}")]
    NonFinite(&'static str),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }
}
