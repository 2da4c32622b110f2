use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Backward;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    Sigmoid,
    /// Row-wise over the last axis of an `N×classes` tensor.
    Softmax,
}

pub fn activation_forward<T: Scalar>(kind: ActivationKind, x: &Tensor<T>) -> Result<Tensor<T>> {
    match kind {
        ActivationKind::Relu => Ok(relu(x)),
        ActivationKind::Sigmoid => Ok(sigmoid(x)),
        ActivationKind::Softmax => softmax(x),
    }
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    map(x, |v| v.max(T::zero()))
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    map(x, |v| T::one() / (T::one() + (-v).exp()))
}

/// Max-subtracted softmax over each row of a rank-2 tensor.
pub fn softmax<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let classes = match x.shape()[..] {
        [_, k] => k,
        _ => {
            return Err(Error::InvalidShape {
                op: "softmax",
                detail: format!("expected N×classes, got {:?}", x.shape()),
            })
        }
    };
    let mut out = x.data().to_vec();
    for row in out.chunks_exact_mut(classes) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

fn map<T: Scalar>(x: &Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    Tensor::from_fn(x.shape(), |i| f(x.data()[i]))
}

/// Stateful activation layer. ReLU caches its input, sigmoid and softmax
/// cache their output.
#[derive(Debug, Clone)]
pub struct Activation<T> {
    pub kind: ActivationKind,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Activation<T> {
    pub fn new(kind: ActivationKind) -> Self {
        Self { kind, cache: None }
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        activation_forward(self.kind, x)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = activation_forward(self.kind, x)?;
        self.cache = Some(match self.kind {
            ActivationKind::Relu => x.clone(),
            ActivationKind::Sigmoid | ActivationKind::Softmax => y.clone(),
        });
        Ok(y)
    }

    /// Drops the forward cache without running backward.
    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Backward<T>> {
        let layer = match self.kind {
            ActivationKind::Relu => "relu",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Softmax => "softmax",
        };
        let cached = self.cache.take().ok_or(Error::MissingCache { layer })?;
        if cached.shape() != grad.shape() {
            return Err(Error::ShapeMismatch {
                op: "activation backward",
                left: grad.shape().to_vec(),
                right: cached.shape().to_vec(),
            });
        }
        let input_grad = match self.kind {
            // derivative at exactly 0 is taken as 0
            ActivationKind::Relu => Tensor::from_fn(grad.shape(), |i| {
                if cached.data()[i] > T::zero() {
                    grad.data()[i]
                } else {
                    T::zero()
                }
            }),
            ActivationKind::Sigmoid => Tensor::from_fn(grad.shape(), |i| {
                let s = cached.data()[i];
                grad.data()[i] * s * (T::one() - s)
            }),
            ActivationKind::Softmax => {
                let k = cached.shape()[1];
                let mut out = Vec::with_capacity(cached.len());
                for (p, g) in cached.data().chunks_exact(k).zip(grad.data().chunks_exact(k)) {
                    let dot: T = p.iter().zip(g).map(|(&a, &b)| a * b).sum();
                    out.extend(p.iter().zip(g).map(|(&pi, &gi)| pi * (gi - dot)));
                }
                Tensor::new(cached.shape().to_vec(), out)?
            }
        };
        Ok(Backward {
            input_grad,
            param_grads: Vec::new(),
        })
    }
}
