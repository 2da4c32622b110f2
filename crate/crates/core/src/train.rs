//! Mini-batch training with per-sample augmentation and per-epoch
//! learning-rate decay.
//!
//! Random streams are derived from the run seed: the epoch-`e` shuffle uses
//! `fork([1, e])`, the augmentation of sample `i` in epoch `e` uses
//! `fork([2, e, i])` and dropout in batch `b` uses `fork([3, e, b])`. Augmented
//! batches can therefore be built in parallel without affecting results.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_image, AugmentConfig};
use crate::dataset::{stack, LabeledSet};
use crate::error::{Error, Result};
use crate::eval::loss_and_accuracy;
use crate::model::Model;
use crate::optim::{apply_decay, Optimizer, OptimizerConfig};
use crate::rng::Rng;
use crate::scalar::Scalar;

const STREAM_SHUFFLE: u64 = 1;
const STREAM_AUGMENT: u64 = 2;
const STREAM_DROPOUT: u64 = 3;

/// Where validation curves come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ValidationSource {
    /// Move this fraction of training patients (by image count) to a
    /// held-out validation side.
    CarvePatients { fraction: f64 },
    /// Reuse the test side.
    TestSplit,
}

impl Default for ValidationSource {
    fn default() -> Self {
        ValidationSource::CarvePatients { fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub augment: AugmentConfig,
    pub validation: ValidationSource,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 55,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            augment: AugmentConfig::default(),
            validation: ValidationSource::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if let ValidationSource::CarvePatients { fraction } = self.validation {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::Config(format!("validation fraction must be in (0, 1), got {fraction}")));
            }
        }
        self.optimizer.validate()?;
        self.augment.validate()
    }

    /// Decay coefficient actually applied per epoch.
    pub fn decay(&self) -> f64 {
        self.optimizer.decay_for(self.epochs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    /// Learning rate used during this epoch.
    pub learning_rate: f64,
}

pub struct Trainer<T> {
    model: Model<T>,
    optimizer: Optimizer<T>,
    config: TrainConfig,
    root: Rng,
    history: Vec<EpochStats>,
    steps: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: Model<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = Optimizer::new(config.optimizer.clone(), model.params())?;
        Ok(Self {
            root: Rng::new(config.seed),
            model,
            optimizer,
            config,
            history: Vec::new(),
            steps: 0,
        })
    }

    pub fn model(&self) -> &Model<T> {
        &self.model
    }

    pub fn into_model(self) -> Model<T> {
        self.model
    }

    pub fn history(&self) -> &[EpochStats] {
        &self.history
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.history.len()
    }

    /// Optimizer steps taken so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Trains one epoch, then evaluates the training set (unaugmented) and
    /// the validation set in eval mode.
    pub fn run_epoch(&mut self, train: &LabeledSet<T>, val: Option<&LabeledSet<T>>) -> Result<&EpochStats> {
        if train.is_empty() {
            return Err(Error::Empty("training set"));
        }
        let e = self.history.len();
        let lr = apply_decay(self.config.optimizer.learning_rate, self.config.decay(), e);
        self.optimizer.set_learning_rate(lr);

        let mut order: Vec<usize> = (0..train.len()).collect();
        self.root.fork(&[STREAM_SHUFFLE, e as u64]).shuffle(&mut order);
        let augment = self.config.augment != AugmentConfig::disabled();

        for (b, idx) in order.chunks(self.config.batch_size).enumerate() {
            let x = if augment {
                let images = idx
                    .par_iter()
                    .map(|&i| {
                        let mut rng = self.root.fork(&[STREAM_AUGMENT, e as u64, i as u64]);
                        augment_image(&train.images[i], &self.config.augment, &mut rng)
                    })
                    .collect::<Result<Vec<_>>>()?;
                stack(&images)?
            } else {
                train.batch(idx)?
            };
            let labels: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
            let mut rng = self.root.fork(&[STREAM_DROPOUT, e as u64, b as u64]);
            let out = self.model.loss_and_grads(&x, &labels, &mut rng)?;
            let loss = out.loss.to_f64_lossy();
            if !loss.is_finite() || !out.grads.iter().all(|g| g.all_finite()) {
                return Err(Error::NumericalAbort {
                    epoch: e + 1,
                    batch: b + 1,
                    learning_rate: lr,
                    loss,
                });
            }
            self.optimizer.step(self.model.params_mut(), &out.grads)?;
            self.steps += 1;
        }

        let (train_loss, train_accuracy) = loss_and_accuracy(&self.model, train)?;
        let (val_loss, val_accuracy) = match val {
            Some(v) => {
                let (l, a) = loss_and_accuracy(&self.model, v)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        self.history.push(EpochStats {
            epoch: e + 1,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
            learning_rate: lr,
        });
        Ok(self.history.last().expect("just pushed"))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: Model<T>,
    pub history: Vec<EpochStats>,
}

/// Runs all configured epochs.
pub fn train<T: Scalar>(model: Model<T>, train_set: &LabeledSet<T>, val_set: Option<&LabeledSet<T>>, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    train_with(model, train_set, val_set, cfg, |_, _| Ok(()))
}

/// Like [`train`], calling `on_epoch` after every epoch (for logging or
/// checkpointing).
pub fn train_with<T: Scalar>(
    model: Model<T>,
    train_set: &LabeledSet<T>,
    val_set: Option<&LabeledSet<T>>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats, &Model<T>) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    let mut trainer = Trainer::new(model, cfg.clone())?;
    for _ in 0..cfg.epochs {
        let stats = trainer.run_epoch(train_set, val_set)?.clone();
        on_epoch(&stats, trainer.model())?;
    }
    let history = trainer.history.clone();
    Ok(TrainOutcome {
        model: trainer.into_model(),
        history,
    })
}

/// Writes `epoch,train_loss,train_acc,val_loss,val_acc,lr`; missing
/// validation values are left empty.
pub fn write_curves(path: &Path, history: &[EpochStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in history {
        w.write_record([
            s.epoch.to_string(),
            s.train_loss.to_string(),
            s.train_accuracy.to_string(),
            opt(s.val_loss),
            opt(s.val_accuracy),
            s.learning_rate.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
