//! Dataset containers, byte-exact MNIST/CIFAR loaders and deterministic
//! transforms. Images are stored flattened, one row per example.

mod cifar;
mod idx;
pub mod synthetic;
mod transform;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub use cifar::{load_cifar, load_cifar_split, parse_cifar, CifarVariant, CIFAR_PIXELS};
pub use idx::{encode_idx_images, encode_idx_labels, load_idx, load_mnist, parse_idx_images, parse_idx_labels};
pub use transform::{
    filter_classes, inverse_permutation, permute_pixels, pixel_permutation, rotate_images, Interpolation,
};

/// Environment variable overriding the dataset cache root.
pub const DATA_ENV: &str = "SPLINECL_DATA";

/// `$SPLINECL_DATA`, or `./data` when unset.
pub fn data_root() -> PathBuf {
    std::env::var_os(DATA_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Normalization {
    /// Bytes mapped affinely onto `[-1, 1]`.
    UnitInterval,
    /// Per-channel `(v/255 − mean) / std`.
    Standardized { mean: Vec<f64>, std: Vec<f64> },
}

impl Normalization {
    /// Normalized value of a raw zero byte in `channel`.
    pub fn zero_value(&self, channel: usize) -> f64 {
        match self {
            Normalization::UnitInterval => -1.0,
            Normalization::Standardized { mean, std } => -mean[channel] / std[channel],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// `[N, c·h·w]`
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub image_shape: [usize; 3],
    pub classes: usize,
    pub normalization: Normalization,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        images: Tensor,
        labels: Vec<usize>,
        image_shape: [usize; 3],
        classes: usize,
        normalization: Normalization,
    ) -> Result<Self> {
        let features: usize = image_shape.iter().product();
        if images.ndim() != 2 || images.shape()[1] != features || images.shape()[0] != labels.len() {
            return Err(Error::Dimension(format!(
                "images {:?} vs {} labels of shape {image_shape:?}",
                images.shape(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Contract(format!("label {bad} outside 0..{classes}")));
        }
        Ok(Self {
            name: name.into(),
            images,
            labels,
            image_shape,
            classes,
            normalization,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.images.shape()[1]
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::Empty(format!("empty subset of {}", self.name)));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.len()) {
            return Err(Error::OutOfRange {
                index: bad,
                len: self.len(),
            });
        }
        Ok(Self {
            images: self.images.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            ..self.clone_meta()
        })
    }

    /// The first `n` examples (all if `n ≥ len`).
    pub fn take(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    pub(crate) fn clone_meta(&self) -> Self {
        Self {
            name: self.name.clone(),
            images: Tensor::zeros(&[1, 1]),
            labels: Vec::new(),
            image_shape: self.image_shape,
            classes: self.classes,
            normalization: self.normalization.clone(),
        }
    }
}
