use crate::dataset::LabeledSet;
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, ConfusionMatrix, MetricsReport};
use crate::model::Model;
use crate::nn::{cross_entropy_loss, one_hot};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Samples per inference chunk. Results do not depend on it.
pub const EVAL_CHUNK: usize = 128;

/// Class probabilities for every sample, `N×classes`.
pub fn predict_proba<T: Scalar>(model: &Model<T>, set: &LabeledSet<T>) -> Result<Tensor<T>> {
    if set.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let all: Vec<usize> = (0..set.len()).collect();
    let mut data = Vec::new();
    let mut classes = 0;
    for chunk in all.chunks(EVAL_CHUNK) {
        let p = model.predict(&set.batch(chunk)?)?;
        classes = p.shape()[1];
        data.extend_from_slice(p.data());
    }
    Tensor::new(vec![set.len(), classes], data)
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn argmax_rows<T: Scalar>(probs: &Tensor<T>) -> Vec<usize> {
    let k = probs.shape()[1];
    probs
        .data()
        .chunks_exact(k)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub predictions: Vec<usize>,
    pub report: MetricsReport,
}

/// Eval-mode predictions and the full metrics report.
pub fn evaluate<T: Scalar>(model: &Model<T>, set: &LabeledSet<T>) -> Result<Evaluation> {
    let probs = predict_proba(model, set)?;
    let predictions = argmax_rows(&probs);
    let confusion = ConfusionMatrix::from_predictions(&set.labels, &predictions, model.config().output_units)?;
    Ok(Evaluation {
        predictions,
        report: compute_metrics(&confusion)?,
    })
}

/// Mean cross-entropy and accuracy in eval mode.
pub fn loss_and_accuracy<T: Scalar>(model: &Model<T>, set: &LabeledSet<T>) -> Result<(f64, f64)> {
    let probs = predict_proba(model, set)?;
    let y = one_hot(&set.labels, probs.shape()[1])?;
    let loss = cross_entropy_loss(&probs, &y)?.to_f64_lossy();
    let correct = argmax_rows(&probs).iter().zip(&set.labels).filter(|(p, t)| p == t).count();
    Ok((loss, correct as f64 / set.len() as f64))
}
