//! LESS ViT: a Vision Transformer over joint spatial/spectral token grids
//! with low-rank separable attention, Hyper-MAE pretraining and
//! evaluation heads.

pub mod attention;
pub mod data;
pub mod embedding;
pub mod heads;
pub mod hypermae;
mod error;
mod init;

pub use error::{LessError, Result};
