//! Layer library with explicit forward and backward passes.
//!
//! There is no graph engine: every layer exposes a forward function and a
//! backward function taking the cached forward input and the upstream
//! gradient. [`crate::model`] composes them.

mod adam;
mod batchnorm;
mod conv;
mod dense;
mod dropout;
pub mod gradcheck;
mod loss;
mod param;
mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use batchnorm::{
    batchnorm_eval, batchnorm_eval_backward, batchnorm_train, batchnorm_train_backward, BatchNorm, BatchNormCache,
};
pub use conv::{conv1d, conv1d_backward, conv1d_output_len, Conv1d, Conv1dGrads};
pub use dense::{dense, dense_backward, Dense, DenseGrads};
pub use dropout::{dropout, dropout_backward, DropoutMask};
pub use loss::{relu, relu_backward, softmax, softmax_cross_entropy};
pub use param::{glorot_uniform, Parameter};
pub use tensor::Tensor;

/// Whether a forward pass is part of training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch normalization, dropout active.
    Train,
    /// Running statistics, dropout is the identity.
    Eval,
}
