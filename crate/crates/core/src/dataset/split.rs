//! Patient-exclusive train/test partitioning.
//!
//! Patients are sorted by id, shuffled with the split seed, and taken in
//! that order onto the training side until the training image count first
//! reaches `train_fraction` of all images. Everyone else is tested on. If
//! the greedy pass would swallow every patient, the last one is kept on the
//! test side and a warning is logged.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::index::DatasetIndex;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub seed: u64,
    pub train_fraction: f64,
    /// Sorted patient ids.
    pub train_patients: Vec<String>,
    pub test_patients: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Train,
    Test,
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Side::Train),
            "test" => Ok(Side::Test),
            _ => Err(Error::Config(format!("side must be train or test, got {s:?}"))),
        }
    }
}

/// Patient ids in the order the greedy assignment visits them.
pub fn shuffled_patients(patients: &[(String, usize)], seed: u64) -> Vec<(String, usize)> {
    let mut order = patients.to_vec();
    order.sort_by(|a, b| a.0.cmp(&b.0));
    Rng::new(seed).shuffle(&mut order);
    order
}

/// Greedy split over `(patient id, image count)` pairs.
pub fn split_patients(patients: &[(String, usize)], train_fraction: f64, seed: u64) -> Result<SplitSpec> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train_fraction must be in (0, 1), got {train_fraction}")));
    }
    if patients.len() < 2 {
        return Err(Error::Split(format!("need at least 2 patients, got {}", patients.len())));
    }
    let total: usize = patients.iter().map(|p| p.1).sum();
    let target = train_fraction * total as f64;
    if let Some((id, n)) = patients.iter().find(|p| p.1 as f64 > (1.0 - train_fraction) * total as f64) {
        log::warn!(
            "patient {id} holds {n} of {total} images; a {:.0}/{:.0} split is not reachable exactly",
            train_fraction * 100.0,
            (1.0 - train_fraction) * 100.0
        );
    }
    let order = shuffled_patients(patients, seed);
    let mut taken = 0usize;
    let mut train_count = 0usize;
    for (_, n) in &order {
        if train_count as f64 >= target {
            break;
        }
        train_count += n;
        taken += 1;
    }
    if taken == order.len() {
        taken -= 1;
        log::warn!("every patient was needed to reach the training fraction; keeping the last one for testing");
    }
    let mut train: Vec<String> = order[..taken].iter().map(|p| p.0.clone()).collect();
    let mut test: Vec<String> = order[taken..].iter().map(|p| p.0.clone()).collect();
    train.sort();
    test.sort();
    Ok(SplitSpec {
        seed,
        train_fraction,
        train_patients: train,
        test_patients: test,
    })
}

pub fn patient_exclusive_split(index: &DatasetIndex, train_fraction: f64, seed: u64) -> Result<SplitSpec> {
    split_patients(&index.patient_image_counts(), train_fraction, seed)
}

impl SplitSpec {
    /// Checks that the sides are disjoint and together cover exactly the
    /// index's patients.
    pub fn validate(&self, index: &DatasetIndex) -> Result<()> {
        let train: BTreeSet<&str> = self.train_patients.iter().map(String::as_str).collect();
        let test: BTreeSet<&str> = self.test_patients.iter().map(String::as_str).collect();
        if train.len() != self.train_patients.len() || test.len() != self.test_patients.len() {
            return Err(Error::Split("duplicate patient id within one side".into()));
        }
        if let Some(p) = train.intersection(&test).next() {
            return Err(Error::Split(format!("patient {p} appears in both train and test")));
        }
        let known: BTreeSet<&str> = index.patients().keys().map(String::as_str).collect();
        let assigned: BTreeSet<&str> = train.union(&test).copied().collect();
        if let Some(p) = assigned.difference(&known).next() {
            return Err(Error::Split(format!("patient {p} is not in the index")));
        }
        if let Some(p) = known.difference(&assigned).next() {
            return Err(Error::Split(format!("patient {p} is not assigned to either side")));
        }
        Ok(())
    }

    pub fn patients(&self, side: Side) -> &[String] {
        match side {
            Side::Train => &self.train_patients,
            Side::Test => &self.test_patients,
        }
    }

    /// Indices of records belonging to `side`, in index order.
    pub fn record_indices(&self, index: &DatasetIndex, side: Side) -> Vec<usize> {
        records_of(index, self.patients(side))
    }

    /// Fraction of indexed images on the training side.
    pub fn train_image_fraction(&self, index: &DatasetIndex) -> f64 {
        self.record_indices(index, Side::Train).len() as f64 / index.records().len() as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Record indices for a set of patients, in index order.
pub fn records_of(index: &DatasetIndex, patients: &[String]) -> Vec<usize> {
    let mut out: Vec<usize> = patients
        .iter()
        .filter_map(|p| index.patients().get(p))
        .flatten()
        .copied()
        .collect();
    out.sort_unstable();
    out
}

/// Moves roughly `val_fraction` of the training patients (by image count,
/// same greedy rule) to a validation side. Returns `(train, validation)`
/// patient ids.
pub fn carve_validation(split: &SplitSpec, index: &DatasetIndex, val_fraction: f64, seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    let counts: Vec<(String, usize)> = split
        .train_patients
        .iter()
        .map(|p| (p.clone(), index.patients().get(p).map_or(0, Vec::len)))
        .collect();
    let inner = split_patients(&counts, 1.0 - val_fraction, seed)?;
    Ok((inner.train_patients, inner.test_patients))
}
