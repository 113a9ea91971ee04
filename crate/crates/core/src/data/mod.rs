//! Datasets: IDX and CIFAR-10 binary loaders, seeded splits, batching and a
//! synthetic fixture.

mod cifar;
mod idx;
mod synthetic;

use std::io;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoders::{EncodeError, ImageBatch};
use crate::rng::SeededRng;

pub use cifar::{load_cifar10_binary, load_cifar10_file, write_cifar10_file, CifarPart, CIFAR_RECORD_BYTES};
pub use idx::{load_idx, write_idx_images, write_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use synthetic::{synthetic_dataset, SYNTHETIC_SIDE};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: bad format: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error("{}: expected {expected} bytes, found {found}", path.display())]
    Length {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("inconsistent dataset: {0}")]
    Consistency(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

/// Labelled images.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: ImageBatch,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub name: String,
}

impl Dataset {
    pub fn new(name: impl Into<String>, images: ImageBatch, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(DataError::Consistency(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_count) {
            return Err(DataError::Consistency(format!(
                "label {l} outside [0, {class_count})"
            )));
        }
        Ok(Self {
            images,
            labels,
            class_count,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: self.images.select(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            name: self.name.clone(),
        }
    }

    /// The first `n` samples (all of them if `n >= len`).
    pub fn take(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    /// Use the dataset's canonical test files as validation set instead of
    /// splitting. Resolved by the loader; [`split`] ignores it.
    pub use_predefined: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
            use_predefined: false,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(DataError::Invalid(format!(
                "train_fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Seeded permutation, then prefix (train) / suffix (validation).
///
/// The train size is `round(N * train_fraction)`, clamped so both sides are
/// nonempty.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let n = ds.len();
    if n < 2 {
        return Err(DataError::Invalid(format!("cannot split {n} samples")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(spec.seed).shuffle(&mut order);
    let n_train = ((n as f64 * spec.train_fraction).round() as usize).clamp(1, n - 1);
    let (train, val) = order.split_at(n_train);
    Ok((ds.subset(train), ds.subset(val)))
}

/// Mini-batches covering every sample once, in a seeded order when shuffled.
pub struct Batches<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Iterator for Batches<'_> {
    type Item = (ImageBatch, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let idx = &self.order[self.pos..end];
        self.pos = end;
        let labels = idx.iter().map(|&i| self.ds.labels[i]).collect();
        Some((self.ds.images.select(idx), labels))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.pos).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

impl ExactSizeIterator for Batches<'_> {}

pub fn batches<'a>(ds: &'a Dataset, batch_size: usize, rng: &mut SeededRng, shuffle: bool) -> Result<Batches<'a>> {
    if batch_size == 0 {
        return Err(DataError::Invalid("batch_size must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    if shuffle {
        rng.shuffle(&mut order);
    }
    Ok(Batches {
        ds,
        order,
        batch_size,
        pos: 0,
    })
}
