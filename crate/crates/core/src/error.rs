use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point configuration rejected: {0}")]
    InvalidConfig(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error("index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("exterior data known up to radius {have}, layers need {need}")]
    Coverage { have: f64, need: f64 },
    #[error("canonical constraint violated: {probe} points proposed for {interior} interior points")]
    Canonical { interior: usize, probe: usize },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { need: usize, got: usize },
    #[error("grid spacing {h} does not resolve truncation disks (need h <= {max})")]
    Resolution { h: f64, max: f64 },
    #[error("field evaluated at an untruncated charge")]
    Singular,
    #[error("bulk violation: {0}")]
    Bulk(String),
}

pub type Result<T> = std::result::Result<T, Error>;
