//! Optimizer × learning-rate grid search.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledSet;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::model::{build_model, ModelConfig};
use crate::optim::{OptimizerConfig, OptimizerKind};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::train::{train, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub test_accuracy: f64,
}

/// Published full-corpus test accuracies (percent) for the same grid,
/// shipped for side-by-side reading; not reproducible at small scale.
pub const REFERENCE_ACCURACY: [(OptimizerKind, f64, f64); 12] = [
    (OptimizerKind::Sgd, 1e-2, 89.72),
    (OptimizerKind::Sgd, 1e-3, 85.63),
    (OptimizerKind::Sgd, 1e-4, 82.25),
    (OptimizerKind::Adam, 1e-2, 85.39),
    (OptimizerKind::Adam, 1e-3, 86.74),
    (OptimizerKind::Adam, 1e-4, 89.41),
    (OptimizerKind::Rmsprop, 1e-2, 86.59),
    (OptimizerKind::Rmsprop, 1e-3, 90.70),
    (OptimizerKind::Rmsprop, 1e-4, 90.45),
    (OptimizerKind::Nadam, 1e-2, 85.86),
    (OptimizerKind::Nadam, 1e-3, 85.15),
    (OptimizerKind::Nadam, 1e-4, 87.64),
];

/// Trains one model per `(optimizer, lr)` cell, each from the same
/// initialization (`init_seed`) and training seed, and records final test
/// accuracy. Cells run in parallel; rows come back in grid order
/// (optimizers outer, rates inner).
///
/// The base optimizer settings (betas, epsilon, ...) come from
/// `cfg.optimizer`; an explicit `decay` there is kept, otherwise each cell
/// decays by its own `lr / epochs`.
pub fn sweep<T: Scalar>(
    train_set: &LabeledSet<T>,
    test_set: &LabeledSet<T>,
    optimizers: &[OptimizerKind],
    learning_rates: &[f64],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    init_seed: u64,
) -> Result<Vec<SweepCell>> {
    if optimizers.is_empty() || learning_rates.is_empty() {
        return Err(Error::Config("sweep needs at least one optimizer and one learning rate".into()));
    }
    let grid: Vec<(OptimizerKind, f64)> = optimizers
        .iter()
        .flat_map(|&o| learning_rates.iter().map(move |&lr| (o, lr)))
        .collect();
    grid.par_iter()
        .map(|&(kind, lr)| {
            let cell_cfg = TrainConfig {
                optimizer: OptimizerConfig {
                    kind,
                    learning_rate: lr,
                    ..cfg.optimizer.clone()
                },
                ..cfg.clone()
            };
            let model = build_model(model_cfg, &mut Rng::new(init_seed))?;
            let out = train(model, train_set, None, &cell_cfg)?;
            let eval = evaluate(&out.model, test_set)?;
            Ok(SweepCell {
                optimizer: kind,
                learning_rate: lr,
                test_accuracy: eval.report.accuracy,
            })
        })
        .collect()
}

/// Writes `optimizer,learning_rate,test_accuracy`.
pub fn write_sweep_csv(path: &Path, cells: &[SweepCell]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["optimizer", "learning_rate", "test_accuracy"])?;
    for c in cells {
        w.write_record([c.optimizer.name().to_string(), format!("{:e}", c.learning_rate), c.test_accuracy.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reference table as CSV text in the same layout, accuracy as a fraction.
pub fn reference_csv() -> String {
    let mut s = String::from("optimizer,learning_rate,test_accuracy\n");
    for (kind, lr, pct) in REFERENCE_ACCURACY {
        s.push_str(&format!("{},{lr:e},{}\n", kind.name(), pct / 100.0));
    }
    s
}
