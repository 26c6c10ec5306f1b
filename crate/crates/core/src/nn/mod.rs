//! Numeric core: tensors, reverse-mode differentiation, GRU cell, Adam and
//! checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod gru;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{clip_grad_norm, AdamConfig, AdamState};
pub use gru::{gru_cell, GruWeights};
pub use params::ParamStore;
pub use tape::{Gradients, Tape, Var};
pub use tensor::{DType, Scalar, Tensor};
