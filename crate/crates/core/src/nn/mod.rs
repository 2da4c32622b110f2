//! Layers with hand-written forward and backward passes.
//!
//! All layers consume batches whose first axis is the sample index. Forward
//! in [`Mode::Train`] caches what the matching backward needs; the cache is
//! consumed by that backward call. [`Layer::infer`] takes `&self` and caches
//! nothing, so a frozen model can serve concurrent callers.

mod activation;
mod conv;
mod dense;
mod dropout;
mod loss;
mod pool;

use serde::{Deserialize, Serialize};

pub use activation::{activation_forward, relu, sigmoid, softmax, Activation, ActivationKind};
pub use conv::{conv2d_forward, flip_kernel, Conv2d, Padding};
pub use dense::{dense_forward, Dense, Flatten};
pub use dropout::{dropout_forward, Dropout};
pub use loss::{cross_entropy_loss, one_hot, softmax_cross_entropy_backward};
pub use pool::{maxpool_forward, MaxPool};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

/// Result of one layer's backward pass.
#[derive(Debug, Clone)]
pub struct Backward<T> {
    pub input_grad: Tensor<T>,
    /// Gradients in the same order as [`Layer::params`].
    pub param_grads: Vec<Tensor<T>>,
}

/// Declarative description of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv2d {
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: Padding,
    },
    /// Always 2×2 with stride 2.
    MaxPool,
    Relu,
    Sigmoid,
    Dropout { rate: f64 },
    Flatten,
    Dense { units: usize },
    Softmax,
}

#[derive(Debug, Clone)]
pub enum Layer<T> {
    Conv2d(Conv2d<T>),
    MaxPool(MaxPool),
    Activation(Activation<T>),
    Dropout(Dropout<T>),
    Flatten(Flatten),
    Dense(Dense<T>),
}

impl<T: Scalar> Layer<T> {
    /// Instantiates `spec` for per-sample input shape `input` and returns
    /// the layer with its per-sample output shape.
    pub fn build(spec: &LayerSpec, input: &[usize], rng: &mut Rng) -> Result<(Self, Vec<usize>)> {
        let bad = |detail: String| Error::Config(format!("{spec:?}: {detail}"));
        Ok(match *spec {
            LayerSpec::Conv2d {
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                padding,
            } => {
                let &[h, w, c] = input else {
                    return Err(bad(format!("needs H×W×C input, got {input:?}")));
                };
                if out_channels == 0 || kernel_h == 0 || kernel_w == 0 {
                    return Err(bad("zero extent".into()));
                }
                let layer = Conv2d::init(kernel_h, kernel_w, c, out_channels, stride, padding, rng);
                let out = layer.output_shape([h, w, c])?;
                (Layer::Conv2d(layer), out.to_vec())
            }
            LayerSpec::MaxPool => {
                let &[h, w, c] = input else {
                    return Err(bad(format!("needs H×W×C input, got {input:?}")));
                };
                if h < 2 || w < 2 {
                    return Err(bad(format!("input {h}x{w} too small to pool")));
                }
                (Layer::MaxPool(MaxPool::new()), MaxPool::output_shape([h, w, c]).to_vec())
            }
            LayerSpec::Relu => (Layer::Activation(Activation::new(ActivationKind::Relu)), input.to_vec()),
            LayerSpec::Sigmoid => (Layer::Activation(Activation::new(ActivationKind::Sigmoid)), input.to_vec()),
            LayerSpec::Softmax => {
                if input.len() != 1 {
                    return Err(bad(format!("needs flat input, got {input:?}")));
                }
                (Layer::Activation(Activation::new(ActivationKind::Softmax)), input.to_vec())
            }
            LayerSpec::Dropout { rate } => (Layer::Dropout(Dropout::new(rate)?), input.to_vec()),
            LayerSpec::Flatten => (Layer::Flatten(Flatten::new()), vec![input.iter().product()]),
            LayerSpec::Dense { units } => {
                let &[d] = input else {
                    return Err(bad(format!("needs flat input, got {input:?}")));
                };
                if units == 0 {
                    return Err(bad("zero units".into()));
                }
                (Layer::Dense(Dense::init(d, units, rng)), vec![units])
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool(_) => "maxpool",
            Layer::Activation(a) => match a.kind {
                ActivationKind::Relu => "relu",
                ActivationKind::Sigmoid => "sigmoid",
                ActivationKind::Softmax => "softmax",
            },
            Layer::Dropout(_) => "dropout",
            Layer::Flatten(_) => "flatten",
            Layer::Dense(_) => "dense",
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut Rng) -> Result<Tensor<T>> {
        if mode == Mode::Eval {
            return self.infer(x);
        }
        match self {
            Layer::Conv2d(l) => l.forward(x),
            Layer::MaxPool(l) => l.forward(x),
            Layer::Activation(l) => l.forward(x),
            Layer::Dropout(l) => l.forward(x, rng),
            Layer::Flatten(l) => l.forward(x),
            Layer::Dense(l) => l.forward(x),
        }
    }

    /// Eval-mode forward: no caching, dropout is identity.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv2d(l) => l.infer(x),
            Layer::MaxPool(l) => l.infer(x),
            Layer::Activation(l) => l.infer(x),
            Layer::Dropout(_) => Ok(x.clone()),
            Layer::Flatten(l) => l.infer(x),
            Layer::Dense(l) => l.infer(x),
        }
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Backward<T>> {
        match self {
            Layer::Conv2d(l) => l.backward(grad),
            Layer::MaxPool(l) => l.backward(grad),
            Layer::Activation(l) => l.backward(grad),
            Layer::Dropout(l) => l.backward(grad),
            Layer::Flatten(l) => l.backward(grad),
            Layer::Dense(l) => l.backward(grad),
        }
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv2d(l) => vec![&l.kernels, &l.bias],
            Layer::Dense(l) => vec![&l.weights, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv2d(l) => vec![&mut l.kernels, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weights, &mut l.bias],
            _ => Vec::new(),
        }
    }
}

/// Backward pass of a single layer: `(∂C/∂input, ∂C/∂params)`.
pub fn layer_backward<T: Scalar>(layer: &mut Layer<T>, upstream: &Tensor<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
    let b = layer.backward(upstream)?;
    Ok((b.input_grad, b.param_grads))
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn glorot_uniform<T: Scalar>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::from_f64_lossy(rng.uniform_range(-limit, limit)))
}
