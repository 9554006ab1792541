//! Sentiment classification for dialectal Arabic text with a convolutional
//! model and mixed max/average pooling.
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common `f64` instantiation.

pub mod corpus;
pub mod encoder;
pub mod error;
pub mod kv;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod pooling;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod synthetic;
pub mod text;
pub mod trainer;

pub use error::{Error, Result};
pub use rng::Rng;
pub use scalar::Scalar;

pub type Tensor64 = nn::Tensor<f64>;
pub type Tensor32 = nn::Tensor<f32>;
pub type ScmModel64 = model::ScmModel<f64>;
pub type ScmModel32 = model::ScmModel<f32>;
