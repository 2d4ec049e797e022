//! Evaluation heads over frozen encoder features.

mod finetune;
mod knn;
mod linear;
mod moe;
mod pca;

pub use finetune::{fine_tune, FineTuneConfig, FineTuned};
pub use knn::{knn_predict, knn_probe, DEFAULT_KNN_K};
pub use linear::{accuracy, argmax, linear_head, majority_baseline, train_linear_probe, LinearProbe, ProbeConfig};
pub use moe::{moe_forward, top_k, train_moe, MoeConfig, MoeExpert, MoeHead, MoePrediction, DEFAULT_TOP_K};
pub use pca::{covariance_matrix, pca_patch_features, scores_to_ppm, scores_to_text, Pca};
