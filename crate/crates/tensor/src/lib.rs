//! Dense tensors, tape-based reverse-mode gradients and MAC accounting.
//!
//! This crate is the arithmetic substrate for the LESS ViT model crates.
//! It deliberately supports only what those models need: row-major `f64`
//! storage, a handful of differentiable ops and matrix products backed by
//! `matrixmultiply`.

mod error;
pub mod flops;
mod gemm;
pub mod gradcheck;
pub mod optim;
mod params;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use flops::FlopCounter;
pub use gemm::{precision, set_precision, with_precision, Precision};
pub use params::{Bound, ParamGrads, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{axis_select_indices, Tensor, LAYERNORM_EPS};
