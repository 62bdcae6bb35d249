//! Run configuration files (TOML).
//!
//! ```toml
//! seed = 1
//! output_dir = "out"
//! method = "attenuation"          # or "hard"
//!
//! [data]
//! split = { train = 0.7, validation = 0.15, test = 0.15 }
//! [data.source]
//! kind = "synthetic"              # or "cifar10" (files = [...]) / "idx" (images, labels)
//! classes = 5
//! per_class = 240
//! size = 12
//! noise = 0.35
//!
//! [model]
//! layers = [
//!   { type = "conv", filters = 8, kernel = 3, padding = 1 },
//!   { type = "relu" }, { type = "max_pool" },
//!   ...
//!   { type = "flatten" }, { type = "dense", units = 5 },
//! ]
//!
//! [train]                         # TrainConfig; rng_seed is derived from `seed`
//! [prune]                         # PruneConfig
//! ```
//!
//! Every random stream (data generation, initialisation, shuffling) is
//! derived from the top-level `seed`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::criteria::Criterion;
use crate::data::{gen_synthetic, load_cifar10_binary, load_idx, Dataset, Split, SyntheticConfig};
use crate::error::{Error, Result};
use crate::nn::{LayerSpec, TrainConfig};
use crate::scheduler::{Method, PruneConfig, PruneThreshold};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        classes: usize,
        per_class: usize,
        size: usize,
        #[serde(default = "one")]
        channels: usize,
        noise: f64,
    },
    Cifar10 {
        files: Vec<PathBuf>,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    #[serde(default)]
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_method")]
    pub method: Method,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub prune: PruneConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_method() -> Method {
    Method::Attenuation
}

/// splitmix64 step, used to derive independent sub-seeds.
fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub method: Option<Method>,
    pub criterion: Option<Criterion>,
    pub attenuation_factor: Option<f64>,
    pub a: Option<usize>,
    pub t1: Option<f64>,
    pub t2: Option<PruneThreshold>,
    pub target_prune_fraction: Option<f64>,
}

impl RunConfig {
    /// The desk-scale reference setup: five synthetic classes of 12x12
    /// images and a conv(8)-pool-conv(16)-pool-dense network.
    pub fn desk() -> Self {
        let conv = |filters| LayerSpec::Conv {
            filters,
            kernel: 3,
            stride: 1,
            padding: 1,
        };
        RunConfig {
            seed: 1,
            output_dir: default_output(),
            method: Method::Attenuation,
            data: DataConfig {
                source: DataSource::Synthetic {
                    classes: 5,
                    per_class: 400,
                    size: 12,
                    channels: 1,
                    noise: 0.6,
                },
                split: Split::default(),
            },
            model: ModelConfig {
                layers: vec![
                    conv(8),
                    LayerSpec::Relu,
                    LayerSpec::MaxPool,
                    conv(16),
                    LayerSpec::Relu,
                    LayerSpec::MaxPool,
                    LayerSpec::Flatten,
                    LayerSpec::Dense { units: 5 },
                ],
            },
            train: TrainConfig {
                learning_rate: 0.1,
                batch_size: 32,
                epochs: 8,
                rng_seed: 0,
            },
            prune: PruneConfig {
                a: 2,
                t1: 0.03,
                t2: PruneThreshold::Relative(0.1),
                accuracy_floor: 0.6,
                finetune_learning_rate: Some(0.02),
                max_rounds: 60,
                ..PruneConfig::default()
            },
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Loads a config file; relative data paths resolve against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut config.data.source {
            DataSource::Cifar10 { files } => files.iter_mut().for_each(resolve),
            DataSource::Idx { images, labels } => {
                resolve(images);
                resolve(labels);
            }
            DataSource::Synthetic { .. } => {}
        }
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
        if let Some(v) = o.method {
            self.method = v;
        }
        if let Some(v) = o.criterion {
            self.prune.criterion = v;
        }
        if let Some(v) = o.attenuation_factor {
            self.prune.attenuation_factor = v;
        }
        if let Some(v) = o.a {
            self.prune.a = v;
        }
        if let Some(v) = o.t1 {
            self.prune.t1 = v;
        }
        if let Some(v) = o.t2 {
            self.prune.t2 = v;
        }
        if let Some(v) = o.target_prune_fraction {
            self.prune.target_prune_fraction = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.prune.validate()?;
        self.data.split.validate()?;
        if self.prune.warmup_max_epochs < self.train.epochs {
            return Err(Error::Config(format!(
                "prune.warmup_max_epochs ({}) must be at least train.epochs ({})",
                self.prune.warmup_max_epochs, self.train.epochs
            )));
        }
        if !matches!(self.model.layers.last(), Some(LayerSpec::Dense { .. })) {
            return Err(Error::Config("model.layers must end with a dense layer".into()));
        }
        if !self.model.layers.iter().any(|l| matches!(l, LayerSpec::Conv { .. })) {
            return Err(Error::Config("model.layers needs at least one conv layer".into()));
        }
        Ok(())
    }

    pub fn data_seed(&self) -> u64 {
        derive_seed(self.seed, 1)
    }

    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, 2)
    }

    /// Training config with the shuffling seed derived from `seed`.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            rng_seed: derive_seed(self.seed, 3),
            ..self.train.clone()
        }
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        let ds = match &self.data.source {
            DataSource::Synthetic {
                classes,
                per_class,
                size,
                channels,
                noise,
            } => gen_synthetic(&SyntheticConfig {
                classes: *classes,
                per_class: *per_class,
                size: *size,
                channels: *channels,
                noise: *noise,
                seed: self.data_seed(),
            })?,
            DataSource::Cifar10 { files } => {
                if files.is_empty() {
                    return Err(Error::Config("cifar10 source needs at least one batch file".into()));
                }
                let parts = files
                    .iter()
                    .map(|f| load_cifar10_binary(f))
                    .collect::<Result<Vec<_>>>()?;
                concat(parts)?
            }
            DataSource::Idx { images, labels } => load_idx(images, labels)?,
        };
        ds.with_split(self.data.split)
    }
}

fn concat(parts: Vec<Dataset>) -> Result<Dataset> {
    let shape = parts[0].sample_shape();
    let class_count = parts.iter().map(|p| p.class_count).max().unwrap_or(0);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for p in parts {
        if p.sample_shape() != shape {
            return Err(Error::Data("dataset files disagree on image shape".into()));
        }
        labels.extend_from_slice(&p.labels);
        data.extend_from_slice(p.images.data());
    }
    let n = labels.len();
    let images = crate::tensor::Tensor::from_vec(&[n, shape[0], shape[1], shape[2]], data)?;
    Dataset::new(images, labels, class_count)
}
