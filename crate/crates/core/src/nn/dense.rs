use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{glorot_uniform, Backward};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{gemm, gemm_a_bt, gemm_at_b, Tensor};

/// `x · w + b` for `x: N×D`, `w: D×U`, `b: U` (bias added to every row).
pub fn dense_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, d, u) = dims(x, w, b)?;
    let mut out = vec![T::zero(); n * u];
    out.par_chunks_mut(u)
        .zip(x.data().par_chunks(d))
        .for_each(|(row, xr)| {
            row.copy_from_slice(b.data());
            gemm(xr, w.data(), row, 1, d, u);
        });
    Tensor::new(vec![n, u], out)
}

fn dims<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match (x.shape(), w.shape(), b.shape()) {
        (&[n, d], &[d2, u], &[u2]) if d == d2 && u == u2 => Ok((n, d, u)),
        _ => Err(Error::ShapeMismatch {
            op: "dense",
            left: x.shape().to_vec(),
            right: w.shape().to_vec(),
        }),
    }
}

#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weights.rank() != 2 || bias.shape() != [weights.shape()[1]] {
            return Err(Error::ShapeMismatch {
                op: "dense",
                left: weights.shape().to_vec(),
                right: bias.shape().to_vec(),
            });
        }
        Ok(Self {
            weights,
            bias,
            cache: None,
        })
    }

    pub fn init(inputs: usize, units: usize, rng: &mut Rng) -> Self {
        Self {
            weights: glorot_uniform(&[inputs, units], inputs, units, rng),
            bias: Tensor::zeros(&[units]),
            cache: None,
        }
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        dense_forward(x, &self.weights, &self.bias)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    /// Returns the input gradient and `[∂weights, ∂bias]`.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Backward<T>> {
        let x = self.cache.take().ok_or(Error::MissingCache { layer: "dense" })?;
        let (n, d) = (x.shape()[0], x.shape()[1]);
        let u = self.bias.len();
        if grad.shape() != [n, u] {
            return Err(Error::ShapeMismatch {
                op: "dense backward",
                left: grad.shape().to_vec(),
                right: vec![n, u],
            });
        }
        let mut dw = vec![T::zero(); d * u];
        gemm_at_b(x.data(), grad.data(), &mut dw, n, d, u);
        let mut db = vec![T::zero(); u];
        for row in grad.data().chunks_exact(u) {
            for (a, &g) in db.iter_mut().zip(row) {
                *a += g;
            }
        }
        let mut dx = vec![T::zero(); n * d];
        let w = self.weights.data();
        dx.par_chunks_mut(d)
            .zip(grad.data().par_chunks(u))
            .for_each(|(dxr, gr)| gemm_a_bt(gr, w, dxr, 1, d, u));
        Ok(Backward {
            input_grad: Tensor::new(vec![n, d], dx)?,
            param_grads: vec![Tensor::new(vec![d, u], dw)?, Tensor::new(vec![u], db)?],
        })
    }
}

/// Collapses every axis after the batch axis.
#[derive(Debug, Clone, Default)]
pub struct Flatten {
    input_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn infer<T: Scalar>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let n = x.shape()[0];
        let rest = x.len() / n;
        x.clone().reshape(&[n, rest])
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.input_shape = Some(x.shape().to_vec());
        self.infer(x)
    }

    pub fn backward<T: Scalar>(&mut self, grad: &Tensor<T>) -> Result<Backward<T>> {
        let shape = self.input_shape.take().ok_or(Error::MissingCache { layer: "flatten" })?;
        Ok(Backward {
            input_grad: grad.clone().reshape(&shape)?,
            param_grads: Vec::new(),
        })
    }
}
