//! Corpus indexing, patient-level splitting, image loading and synthetic
//! data.

pub mod image_io;
pub mod index;
pub mod record;
pub mod split;
pub mod synthetic;

use std::path::Path;

use rayon::prelude::*;

pub use image_io::{load_image, read_rgb, resize_bilinear, rgb_to_tensor, tensor_to_rgb, write_png};
pub use index::{build_index, CountRow, CountTable, DatasetIndex, Discrepancy, IndexReport, MagnificationRow, QUOTED_CORPUS_TOTALS};
pub use record::{parse_filename, BinaryClass, FiveClass, Magnification, NameFields, SampleRecord, Subtype};
pub use split::{carve_validation, patient_exclusive_split, records_of, shuffled_patients, split_patients, Side, SplitSpec};
pub use synthetic::{breakhis_like_patients, texture_image, texture_set, write_corpus, CorpusContent, SyntheticPatient};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Images with five-class labels, all of the same `H×W×C` shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet<T> {
    pub images: Vec<Tensor<T>>,
    pub labels: Vec<usize>,
}

impl<T> Default for LabeledSet<T> {
    fn default() -> Self {
        Self {
            images: Vec::new(),
            labels: Vec::new(),
        }
    }
}

impl<T: Scalar> LabeledSet<T> {
    pub fn new(images: Vec<Tensor<T>>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Config(format!("{} images but {} labels", images.len(), labels.len())));
        }
        if let Some(first) = images.first() {
            if let Some(bad) = images.iter().find(|i| i.shape() != first.shape()) {
                return Err(Error::ShapeMismatch {
                    op: "labeled set",
                    left: first.shape().to_vec(),
                    right: bad.shape().to_vec(),
                });
            }
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= FiveClass::COUNT) {
            return Err(Error::Config(format!("label {l} out of range")));
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-sample shape, or `None` when empty.
    pub fn image_shape(&self) -> Option<&[usize]> {
        self.images.first().map(Tensor::shape)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Stacks samples `indices` into an `N×H×W×C` batch.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor<T>> {
        stack(indices.iter().map(|&i| &self.images[i]))
    }

    pub fn class_counts(&self) -> [usize; FiveClass::COUNT] {
        let mut c = [0; FiveClass::COUNT];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }
}

/// Stacks equally shaped tensors along a new leading axis.
pub fn stack<'a, T: Scalar>(items: impl IntoIterator<Item = &'a Tensor<T>>) -> Result<Tensor<T>> {
    let mut shape: Option<Vec<usize>> = None;
    let mut data = Vec::new();
    let mut n = 0;
    for t in items {
        match &shape {
            None => shape = Some(t.shape().to_vec()),
            Some(s) if s.as_slice() != t.shape() => {
                return Err(Error::ShapeMismatch {
                    op: "stack",
                    left: s.clone(),
                    right: t.shape().to_vec(),
                })
            }
            _ => {}
        }
        data.extend_from_slice(t.data());
        n += 1;
    }
    let mut full = vec![n];
    full.extend(shape.ok_or(Error::Empty("stack"))?);
    Tensor::new(full, data)
}

/// Decodes and resizes the given records (relative to `root`) in parallel.
pub fn load_records<T: Scalar>(root: &Path, index: &DatasetIndex, records: &[usize], h: usize, w: usize) -> Result<LabeledSet<T>> {
    let images = records
        .par_iter()
        .map(|&i| load_image(&root.join(&index.records()[i].path), h, w))
        .collect::<Result<Vec<_>>>()?;
    let labels = records.iter().map(|&i| index.records()[i].label()).collect();
    LabeledSet::new(images, labels)
}
