use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conv::{ConvGrads, ConvLayer};
use super::loss::batch_softmax_xent;
use super::model::{argmax, Layer, LayerGrads, Model};
use crate::error::{Error, Result};
use crate::masking::LayerMask;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Epochs of the plain (unpruned) training run started by `train`.
    pub epochs: usize,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            batch_size: 32,
            epochs: 4,
            rng_seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// `w_i <- w_i - lr * (grad_i * mask_i)` for every filter `i`, bias included.
pub fn sgd_step_masked<T: Scalar>(
    layer: &mut ConvLayer<T>,
    grads: &ConvGrads<T>,
    mask: &LayerMask,
    learning_rate: f64,
) -> Result<()> {
    if mask.len() != layer.filters() {
        return Err(Error::shape("sgd_step_masked", layer.filters(), mask.len()));
    }
    if grads.weights.shape() != layer.weights.shape() || grads.bias.len() != layer.bias.len() {
        return Err(Error::shape(
            "sgd_step_masked",
            format!("{:?}", layer.weights.shape()),
            format!("{:?}", grads.weights.shape()),
        ));
    }
    let lr = T::from_f64_lossy(learning_rate);
    for (i, &m) in mask.values().iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let m = T::from_f64_lossy(m);
        for (w, &g) in layer.filter_mut(i).iter_mut().zip(grads.weights.row(i)) {
            *w -= lr * (g * m);
        }
        layer.bias[i] -= lr * (grads.bias[i] * m);
    }
    Ok(())
}

/// Mini-batch SGD driver owning the shuffling RNG, so a fixed seed gives a
/// bit-identical trajectory.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        Ok(Trainer { config, rng })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Changes the step size for subsequent updates; the shuffling stream is
    /// unaffected.
    pub fn set_learning_rate(&mut self, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {lr} must be positive")));
        }
        self.config.learning_rate = lr;
        Ok(())
    }

    /// One pass over the data in a freshly shuffled order. `masks` holds one
    /// mask per conv layer, or is empty for unmasked training. Dense layers
    /// are always updated. Returns the mean batch loss.
    pub fn train_epoch<T: Scalar>(
        &mut self,
        model: &mut Model<T>,
        images: &Tensor<T>,
        labels: &[usize],
        masks: &[LayerMask],
    ) -> Result<f64> {
        let n = labels.len();
        if n == 0 || images.shape()[0] != n {
            return Err(Error::Data(format!(
                "training set has {} images and {n} labels",
                images.shape().first().copied().unwrap_or(0)
            )));
        }
        if !masks.is_empty() && masks.len() != model.conv_count() {
            return Err(Error::shape("train_epoch masks", model.conv_count(), masks.len()));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(self.config.batch_size) {
            let batch = images.select_rows(chunk);
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            loss_sum += self.step(model, &batch, &batch_labels, masks)?;
            batches += 1;
        }
        Ok(loss_sum / batches as f64)
    }

    /// Forward, backward and masked update on one batch; returns the loss.
    pub fn step<T: Scalar>(
        &mut self,
        model: &mut Model<T>,
        batch: &Tensor<T>,
        labels: &[usize],
        masks: &[LayerMask],
    ) -> Result<f64> {
        let acts = model.forward_cached(batch)?;
        let (loss, grad_logits) = batch_softmax_xent(acts.last().unwrap(), labels)?;
        let (_, grads) = model.backward(&acts, &grad_logits)?;
        let lr = self.config.learning_rate;
        let mut conv_index = 0;
        for (i, g) in grads.layers.iter().enumerate() {
            match (model.layer_mut(i), g) {
                (Layer::Conv(conv), LayerGrads::Conv(cg)) => {
                    let mask = masks.get(conv_index).cloned().unwrap_or_else(|| LayerMask::ones(conv.filters()));
                    sgd_step_masked(conv, cg, &mask, lr)?;
                    conv_index += 1;
                }
                (Layer::Dense(dense), LayerGrads::Dense(dg)) => {
                    let lr = T::from_f64_lossy(lr);
                    for (w, &gw) in dense.weights.data_mut().iter_mut().zip(dg.weights.data()) {
                        *w -= lr * gw;
                    }
                    for (b, &gb) in dense.bias.iter_mut().zip(&dg.bias) {
                        *b -= lr * gb;
                    }
                }
                _ => {}
            }
        }
        let loss = loss.as_f64();
        if !loss.is_finite() {
            return Err(Error::Run("training diverged (non-finite loss)".into()));
        }
        Ok(loss)
    }
}

const EVAL_CHUNK: usize = 256;

/// Fraction of samples whose argmax prediction equals the label.
pub fn evaluate<T: Scalar>(model: &Model<T>, images: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::Data("cannot evaluate on an empty dataset".into()));
    }
    if images.shape()[0] != n {
        return Err(Error::shape("evaluate", n, images.shape()[0]));
    }
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let logits = model.forward(&images.select_rows(chunk))?;
        for (row, &i) in chunk.iter().enumerate() {
            if argmax(logits.row(row)) == labels[i] {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / n as f64)
}
