//! Convolutional network toolkit for five-class breast histopathology
//! classification.

pub mod augment;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod sweep;
pub mod tensor;
pub mod train;

pub use error::{Error, ErrorKind, Result};
pub use model::{build_model, Model, Model32, Model64, ModelConfig};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
