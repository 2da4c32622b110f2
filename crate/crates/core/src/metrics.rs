//! Confusion matrices and per-class precision, recall and F1 with macro and
//! support-weighted averages.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::FiveClass;
use crate::error::{Error, Result};

/// Square count matrix; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|r| r.len() != k) {
            return Err(Error::Config("confusion matrix must be square and non-empty".into()));
        }
        Ok(Self { counts })
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Config(format!("{} labels but {} predictions", truth.len(), predicted.len())));
        }
        let mut m = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            m.add(t, p)?;
        }
        Ok(m)
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let k = self.classes();
        if truth >= k || predicted >= k {
            return Err(Error::Config(format!("class index out of range for {k} classes: ({truth}, {predicted})")));
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }
}

/// Precision, recall, F1 and support of one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    #[serde(flatten)]
    pub scores: ClassScores,
    /// Class never predicted: precision set to 0.
    pub precision_undefined: bool,
    /// Class absent from the ground truth: recall set to 0.
    pub recall_undefined: bool,
    /// Precision and recall both 0: F1 set to 0.
    pub f1_undefined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Macro and support-weighted averages of a set of class rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub total_support: u64,
}

/// Averages per-class rows. Macro is the plain mean over rows; weighted
/// uses `Σ mᵢ·supportᵢ / Σ supportᵢ`.
pub fn aggregate(rows: &[ClassScores]) -> Result<Aggregates> {
    if rows.is_empty() {
        return Err(Error::Empty("class rows"));
    }
    let total_support: u64 = rows.iter().map(|r| r.support).sum();
    if total_support == 0 {
        return Err(Error::Empty("total support"));
    }
    let k = rows.len() as f64;
    let n = total_support as f64;
    let mean = |f: fn(&ClassScores) -> f64| rows.iter().map(f).sum::<f64>() / k;
    let weighted = |f: fn(&ClassScores) -> f64| rows.iter().map(|r| f(r) * r.support as f64).sum::<f64>() / n;
    Ok(Aggregates {
        macro_avg: Averages {
            precision: mean(|r| r.precision),
            recall: mean(|r| r.recall),
            f1: mean(|r| r.f1),
        },
        weighted_avg: Averages {
            precision: weighted(|r| r.precision),
            recall: weighted(|r| r.recall),
            f1: weighted(|r| r.f1),
        },
        total_support,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub total_support: u64,
    /// Human-readable notes for every zero-denominator fallback.
    pub flags: Vec<String>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Default class names: the five diagnostic categories for 5 classes,
/// `class_<i>` otherwise.
pub fn default_class_names(classes: usize) -> Vec<String> {
    if classes == FiveClass::COUNT {
        FiveClass::names()
    } else {
        (0..classes).map(|i| format!("class_{i}")).collect()
    }
}

/// Full report from a confusion matrix. Zero denominators give 0 with a
/// flag. Weighted recall is computed as `trace/total`, which is what
/// `Σ recallᵢ·supportᵢ / total` reduces to since `recallᵢ·supportᵢ = TPᵢ`.
pub fn compute_metrics(confusion: &ConfusionMatrix) -> Result<MetricsReport> {
    compute_metrics_named(confusion, &default_class_names(confusion.classes()))
}

pub fn compute_metrics_named(confusion: &ConfusionMatrix, names: &[String]) -> Result<MetricsReport> {
    let k = confusion.classes();
    if names.len() != k {
        return Err(Error::Config(format!("{} class names for {k} classes", names.len())));
    }
    let total = confusion.total();
    if total == 0 {
        return Err(Error::Empty("confusion matrix"));
    }
    let mut flags = Vec::new();
    let mut per_class = Vec::with_capacity(k);
    for c in 0..k {
        let tp = confusion.get(c, c);
        let predicted = confusion.col_sum(c);
        let support = confusion.row_sum(c);
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let (p, r) = (precision.unwrap_or(0.0), recall.unwrap_or(0.0));
        let f1_undefined = p + r == 0.0;
        let f1 = if f1_undefined { 0.0 } else { 2.0 * p * r / (p + r) };
        if precision.is_none() {
            flags.push(format!("{}: never predicted, precision set to 0", names[c]));
        }
        if recall.is_none() {
            flags.push(format!("{}: no true samples, recall set to 0", names[c]));
        }
        if f1_undefined {
            flags.push(format!("{}: precision and recall both 0, f1 set to 0", names[c]));
        }
        per_class.push(ClassMetrics {
            name: names[c].clone(),
            scores: ClassScores {
                precision: p,
                recall: r,
                f1,
                support,
            },
            precision_undefined: precision.is_none(),
            recall_undefined: recall.is_none(),
            f1_undefined,
        });
    }
    let rows: Vec<ClassScores> = per_class.iter().map(|c| c.scores).collect();
    let agg = aggregate(&rows)?;
    let accuracy = confusion.trace() as f64 / total as f64;
    let mut weighted_avg = agg.weighted_avg;
    weighted_avg.recall = accuracy;
    Ok(MetricsReport {
        confusion: confusion.clone(),
        per_class,
        accuracy,
        macro_avg: agg.macro_avg,
        weighted_avg,
        total_support: total,
        flags,
    })
}

/// Rounds to `decimals` places with ties going up. A small epsilon absorbs
/// binary representation error so that e.g. 0.885 rounds to 0.89.
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (x * scale + 0.5 + 1e-9).floor() / scale
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Text table: one row per class, then accuracy, macro and weighted
    /// averages, two decimals rounded half-up.
    pub fn render_table(&self) -> String {
        let width = self.per_class.iter().map(|c| c.name.len()).max().unwrap_or(0).max(12) + 2;
        let f = |x: f64| format!("{:.2}", round_half_up(x, 2));
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}{:>10}{:>10}{:>10}{:>10}", "", "precision", "recall", "f1-score", "support");
        for c in &self.per_class {
            let sc = c.scores;
            let _ = writeln!(
                s,
                "{:<width$}{:>10}{:>10}{:>10}{:>10}",
                c.name,
                f(sc.precision),
                f(sc.recall),
                f(sc.f1),
                sc.support
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<width$}{:>10}{:>10}{:>10}{:>10}", "accuracy", "", "", f(self.accuracy), self.total_support);
        for (label, a) in [("macro avg", self.macro_avg), ("weighted avg", self.weighted_avg)] {
            let _ = writeln!(
                s,
                "{:<width$}{:>10}{:>10}{:>10}{:>10}",
                label,
                f(a.precision),
                f(a.recall),
                f(a.f1),
                self.total_support
            );
        }
        for flag in &self.flags {
            let _ = writeln!(s, "note: {flag}");
        }
        s
    }
}
