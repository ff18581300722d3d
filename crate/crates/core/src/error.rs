use thiserror::Error;

/// Errors raised by the numerics in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum IsacError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("singular angle {0} rad: sine vanishes")]
    SingularAngle(f64),

    #[error("offset {0} lies outside the support of the density")]
    OutOfSupport(f64),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, IsacError>;
