use lessvit_tensor::TensorError;
use thiserror::Error;

use crate::data::TileError;

#[derive(Debug, Error)]
pub enum LessError {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("metadata error: {0}")]
    Metadata(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error(transparent)]
    Tile(#[from] TileError),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = LessError> = std::result::Result<T, E>;
