//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Parameters are [`Tensor`]s owned by the model. A forward pass records
//! them on a [`Tape`] (by snapshot, or by row gather for embedding
//! matrices), applies [`Primitive`]s, and a call to [`Tape::backward`]
//! returns [`Gradients`] that each parameter folds into its own gradient
//! slot with [`Tensor::accumulate_grad`]. Frozen tensors never receive a
//! gradient, and subgraphs that cannot reach a trainable tensor are skipped
//! during the backward pass.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_params, GradCheckReport};
pub use tape::{CosineOutput, Gradients, ParamGrad, Primitive, Tape, Var, ZERO_NORM_EPS};
pub use tensor::{Parameters, Tensor, TensorId};
