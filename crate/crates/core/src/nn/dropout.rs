use crate::error::{Error, Result};
use crate::nn::{Backward, Mode};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Inverted dropout: at train time each element is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 − rate)`; eval is identity.
#[derive(Debug, Clone)]
pub struct Dropout<T> {
    pub rate: f64,
    mask: Option<Tensor<T>>,
}

/// Functional form. Returns the output and, in train mode, the scaled mask
/// that was applied.
pub fn dropout_forward<T: Scalar>(
    x: &Tensor<T>,
    rate: f64,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(Tensor<T>, Option<Tensor<T>>)> {
    check_rate(rate)?;
    match mode {
        Mode::Eval => Ok((x.clone(), None)),
        Mode::Train => {
            let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
            let mask = Tensor::from_fn(x.shape(), |_| {
                if rng.bernoulli(rate) {
                    T::zero()
                } else {
                    keep
                }
            });
            Ok((x.mul(&mask)?, Some(mask)))
        }
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    Ok(())
}

impl<T: Scalar> Dropout<T> {
    pub fn new(rate: f64) -> Result<Self> {
        check_rate(rate)?;
        Ok(Self { rate, mask: None })
    }

    pub fn forward(&mut self, x: &Tensor<T>, rng: &mut Rng) -> Result<Tensor<T>> {
        let (y, mask) = dropout_forward(x, self.rate, Mode::Train, rng)?;
        self.mask = mask;
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Backward<T>> {
        let mask = self.mask.take().ok_or(Error::MissingCache { layer: "dropout" })?;
        Ok(Backward {
            input_grad: grad.mul(&mask)?,
            param_grads: Vec::new(),
        })
    }
}
