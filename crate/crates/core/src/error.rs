use thiserror::Error;

pub type Result<T> = std::result::Result<T, HfmError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HfmError {
    #[error("width mismatch: expected {expected} features, found {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("dense distributions are limited to n <= {max} (got {n})")]
    TooWide { n: usize, max: usize },
    #[error("distribution is not normalized: entries sum to {sum}")]
    NotNormalized { sum: f64 },
    #[error("distribution has an invalid entry {value} at index {index}")]
    InvalidProbability { index: usize, value: f64 },
    #[error("no fixed point for g = {g} <= g_c = ln 2: the fixed point degenerates to the uniform distribution")]
    BelowPhaseBoundary { g: f64 },
    #[error("no root: {0}")]
    NoRoot(String),
    #[error("zoom undefined: p(s_1 = 1) = 0")]
    ZoomUndefined,
    #[error("empty sample")]
    EmptySample,
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

impl HfmError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        HfmError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
