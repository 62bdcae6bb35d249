//! Labelled image datasets: in-memory form, binary loaders and the
//! synthetic desk-scale generator.

mod cifar;
mod idx;
mod synthetic;

pub use cifar::{decode_cifar10, encode_cifar10, load_cifar10_binary, write_cifar10_binary, CIFAR_RECORD_LEN};
pub use idx::{decode_idx, encode_idx, load_idx, write_idx};
pub use synthetic::{gen_synthetic, SyntheticConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Train/validation/test fractions; they must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for Split {
    fn default() -> Self {
        Split {
            train: 0.7,
            validation: 0.15,
            test: 0.15,
        }
    }
}

impl Split {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must lie in [0, 1] and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `[N, C, H, W]`, values in `[0, 1]`.
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(images: Tensor<f32>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if images.shape().len() != 4 || images.shape()[0] != labels.len() {
            return Err(Error::Data(format!(
                "{} labels for images of shape {:?}",
                labels.len(),
                images.shape()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Label {
                label: l,
                classes: class_count,
            });
        }
        Ok(Dataset {
            images,
            labels,
            class_count,
            split: Split::default(),
        })
    }

    pub fn with_split(mut self, split: Split) -> Result<Self> {
        split.validate()?;
        self.split = split;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-sample `[C, H, W]`.
    pub fn sample_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: self.images.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            split: self.split,
        }
    }

    /// Contiguous train/validation/test partition following `split`.
    pub fn partition(&self) -> Result<(Dataset, Dataset, Dataset)> {
        self.split.validate()?;
        let n = self.len();
        let n_train = (n as f64 * self.split.train).floor() as usize;
        let n_val = ((n as f64 * self.split.validation).floor() as usize).min(n - n_train);
        let idx: Vec<usize> = (0..n).collect();
        Ok((
            self.subset(&idx[..n_train]),
            self.subset(&idx[n_train..n_train + n_val]),
            self.subset(&idx[n_train + n_val..]),
        ))
    }
}
