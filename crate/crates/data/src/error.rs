use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("malformed IDX file: {0}")]
    Idx(String),
    #[error("invalid parameter {name}: {reason}")]
    Parameter { name: &'static str, reason: String },
    #[error("insufficient source data: {0}")]
    Insufficient(String),
    #[error("malformed dataset file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Hfm(#[from] hfm::HfmError),
}

impl DataError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Self::Parameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, DataError>;
