use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::criteria::Criterion;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Weak filters are attenuated and pruned only once they are near zero.
    Attenuation,
    /// Selected filters are zeroed and frozen at once.
    Hard,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Attenuation => "attenuation",
            Method::Hard => "hard",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "attenuation" | "atten" => Ok(Method::Attenuation),
            "hard" => Ok(Method::Hard),
            other => Err(Error::Config(format!(
                "unknown method {other:?} (expected attenuation or hard)"
            ))),
        }
    }
}

/// Where the attenuation factor acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttenuationMode {
    /// Selected filters' weights and bias are scaled by `F_a` once per
    /// selection; fine-tuning updates them with a unit mask.
    Weights,
    /// Parameters are left alone; the selected filters' gradients are scaled
    /// by `F_a` during the following fine-tuning.
    Gradient,
}

/// Near-zero L1 threshold below which a filter is pruned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneThreshold {
    /// The same absolute L1 norm for every layer.
    Absolute(f64),
    /// Factor times each layer's mean filter L1 norm after warm-up.
    Relative(f64),
}

impl Default for PruneThreshold {
    fn default() -> Self {
        PruneThreshold::Relative(1e-6)
    }
}

impl PruneThreshold {
    fn value(self) -> f64 {
        match self {
            PruneThreshold::Absolute(v) | PruneThreshold::Relative(v) => v,
        }
    }
}

/// Hyperparameters of the pruning schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneConfig {
    /// Attenuation factor `F_a`, in (0, 1).
    pub attenuation_factor: f64,
    /// Relative attenuation threshold of the three-valued mask.
    pub alpha: f64,
    /// Relative prune threshold of the three-valued mask, below `alpha`.
    pub beta: f64,
    /// Initial number of filters selected per round, before the first increment.
    pub k0: usize,
    /// Increment of the selection size each round.
    pub a: usize,
    /// Permitted validation-accuracy drop relative to the warm-up accuracy.
    pub t1: f64,
    pub t2: PruneThreshold,
    pub criterion: Criterion,
    /// Stop once this fraction of all conv filters is pruned.
    pub target_prune_fraction: f64,
    pub attenuation_mode: AttenuationMode,
    /// Warm-up trains `TrainConfig::epochs` epochs, then continues up to this
    /// many epochs in total while validation accuracy is below `accuracy_floor`.
    pub warmup_max_epochs: usize,
    pub accuracy_floor: f64,
    /// Epochs per fine-tuning step.
    pub finetune_epochs: usize,
    /// Learning rate after warm-up; the training rate when unset.
    pub finetune_learning_rate: Option<f64>,
    pub max_rounds: usize,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            attenuation_factor: 0.8,
            alpha: 0.5,
            beta: 0.01,
            k0: 0,
            a: 100,
            t1: 0.02,
            t2: PruneThreshold::default(),
            criterion: Criterion::L1,
            target_prune_fraction: 0.5,
            attenuation_mode: AttenuationMode::Weights,
            warmup_max_epochs: 10,
            accuracy_floor: 0.5,
            finetune_epochs: 2,
            finetune_learning_rate: None,
            max_rounds: 40,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        let fa = self.attenuation_factor;
        if !(fa > 0.0 && fa < 1.0) {
            return Err(Error::Config(format!("attenuation factor F_a = {fa} must lie in (0, 1)")));
        }
        if !(self.beta >= 0.0 && self.beta < self.alpha) {
            return Err(Error::Config(format!(
                "thresholds must satisfy 0 <= beta < alpha, got beta = {}, alpha = {}",
                self.beta, self.alpha
            )));
        }
        if self.t1.is_nan() || self.t1 < 0.0 {
            return Err(Error::Config(format!("permitted accuracy drop T1 = {} must be >= 0", self.t1)));
        }
        if !(self.t2.value() >= 0.0 && self.t2.value().is_finite()) {
            return Err(Error::Config(format!("prune threshold T2 = {:?} must be finite and >= 0", self.t2)));
        }
        let f = self.target_prune_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Config(format!("target prune fraction {f} must lie in (0, 1]")));
        }
        if !(0.0..=1.0).contains(&self.accuracy_floor) {
            return Err(Error::Config("accuracy floor must lie in [0, 1]".into()));
        }
        if let Some(lr) = self.finetune_learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("fine-tune learning rate {lr} must be positive")));
            }
        }
        if self.max_rounds == 0 {
            return Err(Error::Config("max_rounds must be positive".into()));
        }
        Ok(())
    }
}
