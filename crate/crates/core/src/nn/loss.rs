//! Categorical cross-entropy over softmax outputs.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const PROB_FLOOR: f64 = 1e-12;
const ROW_SUM_TOLERANCE: f64 = 1e-5;

/// One-hot rows for class indices.
pub fn one_hot<T: Scalar>(labels: &[usize], classes: usize) -> Result<Tensor<T>> {
    if labels.is_empty() {
        return Err(Error::Empty("labels"));
    }
    let mut data = vec![T::zero(); labels.len() * classes];
    for (row, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::Config(format!("label {label} out of range for {classes} classes")));
        }
        data[row * classes + label] = T::one();
    }
    Tensor::new(vec![labels.len(), classes], data)
}

/// `−(1/N) Σ log p[true class]`, probabilities floored at 1e-12.
///
/// Rows of `probs` must sum to 1 within 1e-5 and each label row must hold
/// exactly one 1. Non-finite probabilities yield a NaN loss.
pub fn cross_entropy_loss<T: Scalar>(probs: &Tensor<T>, labels: &Tensor<T>) -> Result<T> {
    let (n, k) = check_pair(probs, labels)?;
    let floor = T::from_f64_lossy(PROB_FLOOR);
    let mut total = T::zero();
    for (row, (p, y)) in probs.data().chunks_exact(k).zip(labels.data().chunks_exact(k)).enumerate() {
        let sum: T = p.iter().copied().sum();
        if !sum.is_finite() {
            // propagated so callers can abort on a diverged model
            total = T::nan();
            continue;
        }
        if (sum.to_f64_lossy() - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::InvalidShape {
                op: "cross_entropy",
                detail: format!("probability row {row} sums to {sum}"),
            });
        }
        let hot: Vec<usize> = y.iter().enumerate().filter(|(_, &v)| v != T::zero()).map(|(i, _)| i).collect();
        match hot[..] {
            [c] if y[c] == T::one() => total -= p[c].max(floor).ln(),
            _ => {
                return Err(Error::InvalidShape {
                    op: "cross_entropy",
                    detail: format!("label row {row} is not one-hot"),
                })
            }
        }
    }
    Ok(total / T::from_usize_lossy(n))
}

/// Gradient of mean cross-entropy with respect to the softmax logits:
/// `(probs − onehot) / N`.
pub fn softmax_cross_entropy_backward<T: Scalar>(probs: &Tensor<T>, labels: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, _) = check_pair(probs, labels)?;
    let inv_n = T::one() / T::from_usize_lossy(n);
    Ok(probs.sub(labels)?.scale(inv_n))
}

fn check_pair<T: Scalar>(probs: &Tensor<T>, labels: &Tensor<T>) -> Result<(usize, usize)> {
    match (probs.shape(), labels.shape()) {
        (&[n, k], &[n2, k2]) if n == n2 && k == k2 => Ok((n, k)),
        _ => Err(Error::ShapeMismatch {
            op: "cross_entropy",
            left: probs.shape().to_vec(),
            right: labels.shape().to_vec(),
        }),
    }
}
