use thiserror::Error;

pub type Result<T> = std::result::Result<T, DbnError>;

#[derive(Debug, Error)]
pub enum DbnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: mean |W| = {mean_abs_weight}")]
    Diverged { epoch: usize, mean_abs_weight: f64 },
    #[error("layer {layer} out of range 1..={depth}")]
    Layer { layer: usize, depth: usize },
    #[error(transparent)]
    Hfm(#[from] hfm::HfmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
