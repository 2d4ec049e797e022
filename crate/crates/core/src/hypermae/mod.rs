//! Masked autoencoding over both the spatial and spectral axes.

mod checkpoint;
mod loss;
mod masking;
mod model;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use loss::{
    loss_spatial, loss_spectral, loss_terms, patch_normalized_target, spatial_weights, spectral_weights,
    total_loss, LossTerms, PixelWeights,
};
pub use masking::{apply_masks, mask_count, sample_mask_plan, MaskPlan, MaskRatios};
pub use model::{HyperMae, HyperMaeConfig};
pub use train::{pretrain, LossRecord, PretrainConfig, PretrainOutcome};
