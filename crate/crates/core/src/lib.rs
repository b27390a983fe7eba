//! Lightweight vision-transformer inference for mango leaf disease images.

pub mod error;
pub mod explain;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod profiler;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod weights;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type WeightStore = weights::WeightStore<f32>;
pub type AttentionTrace = model::AttentionTrace<f32>;
