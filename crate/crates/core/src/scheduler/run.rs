//! The pruning schedule: warm up, then per round grow `k`, score, attenuate
//! (or hard-prune) the bottom-k, fine-tune, prune near-zero filters, and gate
//! on validation accuracy with a one-round rollback.

use std::collections::BTreeSet;

use super::compact::compact_model;
use super::config::{AttenuationMode, Method, PruneConfig, PruneThreshold};
use super::log::{ExperimentLog, FilterRecord, Outcome, RoundRecord, RunHeader, RunSummary};
use crate::criteria::{filter_l1, filter_scores, normalized_scores, select_bottom_k, ImportanceScores};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::masking::{
    apply_attenuation, compute_mask_attenuate, prune_selected, prune_zeroed_limited, record_recovery, relative_thresholds,
    rollback_last_prune, FilterRef, FilterStatus, LayerMask,
};
use crate::nn::{evaluate, Model, TrainConfig, Trainer};

/// Hooks into a running schedule; every method defaults to doing nothing.
pub trait RoundObserver {
    /// Called right before the round's prune step: near-zero filters for
    /// attenuation, the selection itself for hard pruning.
    fn before_prune(&mut self, _round: usize, _model: &Model<f32>) {}

    /// Called right after a rollback restored `restored`, before the
    /// closing fine-tune.
    fn after_rollback(&mut self, _round: usize, _model: &Model<f32>, _restored: &[FilterRef]) {}
}

struct NoObserver;

impl RoundObserver for NoObserver {}

/// Attenuation-based pruning.
pub fn run_attenuation_pruning(
    model: Model<f32>,
    train: &Dataset,
    val: &Dataset,
    config: &PruneConfig,
    train_config: &TrainConfig,
) -> Result<(Model<f32>, ExperimentLog)> {
    Schedule::new(Method::Attenuation, model, train, val, config, train_config)?.run(&mut NoObserver)
}

/// Baseline with the same schedule, where each selected filter is zeroed and
/// frozen immediately.
pub fn run_hard_pruning(
    model: Model<f32>,
    train: &Dataset,
    val: &Dataset,
    config: &PruneConfig,
    train_config: &TrainConfig,
) -> Result<(Model<f32>, ExperimentLog)> {
    Schedule::new(Method::Hard, model, train, val, config, train_config)?.run(&mut NoObserver)
}

pub fn run_pruning(
    method: Method,
    model: Model<f32>,
    train: &Dataset,
    val: &Dataset,
    config: &PruneConfig,
    train_config: &TrainConfig,
) -> Result<(Model<f32>, ExperimentLog)> {
    match method {
        Method::Attenuation => run_attenuation_pruning(model, train, val, config, train_config),
        Method::Hard => run_hard_pruning(model, train, val, config, train_config),
    }
}

/// Initial training: `train_config.epochs` epochs, extended one epoch at a
/// time up to `warmup_max_epochs` while validation accuracy is below the
/// floor. Returns the epochs run and the validation accuracy.
/// [`run_pruning`] with an observer.
pub fn run_pruning_observed(
    method: Method,
    model: Model<f32>,
    train: &Dataset,
    val: &Dataset,
    config: &PruneConfig,
    train_config: &TrainConfig,
    observer: &mut dyn RoundObserver,
) -> Result<(Model<f32>, ExperimentLog)> {
    Schedule::new(method, model, train, val, config, train_config)?.run(observer)
}

pub fn warm_up(
    model: &mut Model<f32>,
    train: &Dataset,
    val: &Dataset,
    config: &PruneConfig,
    train_config: &TrainConfig,
) -> Result<(usize, f64)> {
    config.validate()?;
    let mut trainer = Trainer::new(train_config.clone())?;
    warm_up_with(&mut trainer, model, train, val, config)
}

fn warm_up_with(
    trainer: &mut Trainer,
    model: &mut Model<f32>,
    train: &Dataset,
    val: &Dataset,
    config: &PruneConfig,
) -> Result<(usize, f64)> {
    let mut epochs = 0;
    while epochs < trainer.config().epochs {
        trainer.train_epoch(model, &train.images, &train.labels, &[])?;
        epochs += 1;
    }
    let mut acc = evaluate(model, &val.images, &val.labels)?;
    while acc < config.accuracy_floor && epochs < config.warmup_max_epochs {
        trainer.train_epoch(model, &train.images, &train.labels, &[])?;
        epochs += 1;
        acc = evaluate(model, &val.images, &val.labels)?;
    }
    if acc < config.accuracy_floor {
        return Err(Error::Run(format!(
            "warm-up reached validation accuracy {acc:.4} after {epochs} epochs, below the floor {:.4}; \
             raise warmup_max_epochs or the learning rate",
            config.accuracy_floor
        )));
    }
    log::info!("warm-up: {epochs} epochs, validation accuracy {acc:.4}");
    Ok((epochs, acc))
}

struct Schedule<'a> {
    method: Method,
    model: Model<f32>,
    train: &'a Dataset,
    val: &'a Dataset,
    config: &'a PruneConfig,
    train_config: &'a TrainConfig,
    trainer: Trainer,
    finetune_epochs_total: usize,
}

struct ScoreSnapshot {
    raw: Vec<ImportanceScores>,
    normalized: Vec<ImportanceScores>,
}

impl<'a> Schedule<'a> {
    fn new(
        method: Method,
        model: Model<f32>,
        train: &'a Dataset,
        val: &'a Dataset,
        config: &'a PruneConfig,
        train_config: &'a TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        let trainer = Trainer::new(train_config.clone())?;
        if model.conv_count() == 0 {
            return Err(Error::Config("model has no convolution layers to prune".into()));
        }
        for (name, ds) in [("training", train), ("validation", val)] {
            if ds.is_empty() {
                return Err(Error::Data(format!("{name} set is empty")));
            }
            if ds.sample_shape() != model.input_shape() {
                return Err(Error::Data(format!(
                    "{name} images have shape {:?}, model expects {:?}",
                    ds.sample_shape(),
                    model.input_shape()
                )));
            }
        }
        Ok(Schedule {
            method,
            model,
            train,
            val,
            config,
            train_config,
            trainer,
            finetune_epochs_total: 0,
        })
    }

    fn accuracy(&self) -> Result<f64> {
        evaluate(&self.model, &self.val.images, &self.val.labels)
    }

    fn fine_tune(&mut self, masks: &[LayerMask]) -> Result<()> {
        for _ in 0..self.config.finetune_epochs {
            let loss = self
                .trainer
                .train_epoch(&mut self.model, &self.train.images, &self.train.labels, masks)?;
            if log::log_enabled!(log::Level::Debug) {
                log::debug!("fine-tune epoch: loss {loss:.4}, validation {:.4}", self.accuracy()?);
            }
        }
        self.finetune_epochs_total += self.config.finetune_epochs;
        Ok(())
    }

    /// Masks for fine-tuning: pruned filters frozen, filters selected this
    /// round scaled by `selected_factor`, everything else free.
    fn masks(&self, selection: &[FilterRef], selected_factor: f64) -> Vec<LayerMask> {
        self.model
            .states()
            .iter()
            .enumerate()
            .map(|(l, states)| {
                let selected: BTreeSet<usize> = selection.iter().filter(|r| r.layer == l).map(|r| r.filter).collect();
                LayerMask::for_layer(states, &selected, selected_factor)
            })
            .collect()
    }

    fn warm_up(&mut self) -> Result<(usize, f64)> {
        warm_up_with(&mut self.trainer, &mut self.model, self.train, self.val, self.config)
    }

    fn scores(&self) -> Result<ScoreSnapshot> {
        let pruned = self.model.pruned_flags();
        let raw: Vec<ImportanceScores> = (0..self.model.conv_count())
            .map(|l| filter_scores(self.model.conv(l), self.config.criterion))
            .collect();
        let normalized = raw
            .iter()
            .zip(&pruned)
            .map(|(s, p)| normalized_scores(s, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(ScoreSnapshot { raw, normalized })
    }

    fn filter_table(&self, scores: &ScoreSnapshot) -> Result<Vec<FilterRecord>> {
        let pruned = self.model.pruned_flags();
        let mut out = Vec::with_capacity(self.model.total_filters());
        for (l, states) in self.model.states().iter().enumerate() {
            let l1 = filter_l1(self.model.conv(l)).scores;
            let mask = compute_mask_attenuate(
                &scores.normalized[l],
                &pruned[l],
                self.config.alpha,
                self.config.beta,
                self.config.attenuation_factor,
            )?;
            for (f, s) in states.iter().enumerate() {
                out.push(FilterRecord {
                    layer: l,
                    filter: f,
                    status: s.status,
                    attenuation_count: s.attenuation_count,
                    recovery_count: s.recovery_count,
                    l1_norm: l1[f],
                    raw_score: scores.raw[l].scores[f],
                    normalized_score: scores.normalized[l].scores[f],
                    threshold_mask: mask.values()[f],
                });
            }
        }
        Ok(out)
    }

    fn thresholds(&self) -> Vec<f64> {
        match self.config.t2 {
            PruneThreshold::Absolute(v) => vec![v; self.model.conv_count()],
            PruneThreshold::Relative(factor) => relative_thresholds(&self.model, factor),
        }
    }

    /// The only layers left with more than one unpruned filter can still lose one.
    fn exhausted(&self) -> bool {
        self.model.remaining_per_layer().iter().all(|&r| r <= 1)
    }

    fn run(mut self, observer: &mut dyn RoundObserver) -> Result<(Model<f32>, ExperimentLog)> {
        let (warmup_epochs, baseline) = self.warm_up()?;
        if let Some(lr) = self.config.finetune_learning_rate {
            self.trainer.set_learning_rate(lr)?;
        }
        let thresholds = self.thresholds();
        let total = self.model.total_filters();
        let target = ((self.config.target_prune_fraction * total as f64).ceil() as usize).min(total);
        let header = RunHeader {
            method: self.method,
            criterion: self.config.criterion,
            prune: self.config.clone(),
            train: self.train_config.clone(),
            filters_per_layer: self.model.states().iter().map(Vec::len).collect(),
            total_filters: total,
            target_pruned: target,
            warmup_epochs,
            baseline_accuracy: baseline,
            thresholds: thresholds.clone(),
        };

        let fa = self.config.attenuation_factor;
        let mut k = self.config.k0;
        let mut previous: Vec<FilterRef> = Vec::new();
        let mut rounds = Vec::new();
        let mut outcome = Outcome::MaxRounds;
        let mut final_accuracy = baseline;

        for round in 1..=self.config.max_rounds {
            if self.exhausted() {
                outcome = Outcome::Exhausted;
                break;
            }
            let epochs_before = self.finetune_epochs_total;
            k += self.config.a;
            let scores = self.scores()?;
            let pruned_now = self.model.pruned_count();
            let k_eff = match self.method {
                Method::Attenuation => k,
                Method::Hard => k.min(target.saturating_sub(pruned_now)),
            };
            let selection = select_bottom_k(&scores.normalized, k_eff, &self.model.pruned_flags());

            let (recovered, pruned, acc_sel, acc_ft) = match self.method {
                Method::Attenuation => {
                    let recovered = record_recovery(self.model.states_mut(), &previous, &selection);
                    let grad_factor = match self.config.attenuation_mode {
                        AttenuationMode::Weights => {
                            apply_attenuation(&mut self.model, &selection, fa)?;
                            1.0
                        }
                        AttenuationMode::Gradient => {
                            apply_attenuation(&mut self.model, &selection, 1.0)?;
                            fa
                        }
                    };
                    let acc_sel = self.accuracy()?;
                    let masks = self.masks(&selection, grad_factor);
                    self.fine_tune(&masks)?;
                    let acc_ft = self.accuracy()?;
                    observer.before_prune(round, &self.model);
                    let budget = target.saturating_sub(self.model.pruned_count());
                    let pruned = prune_zeroed_limited(&mut self.model, &thresholds, budget)?;
                    (recovered, pruned, acc_sel, acc_ft)
                }
                Method::Hard => {
                    observer.before_prune(round, &self.model);
                    let pruned = prune_selected(&mut self.model, &selection)?;
                    let acc_sel = self.accuracy()?;
                    let masks = self.masks(&[], 1.0);
                    self.fine_tune(&masks)?;
                    let acc_ft = self.accuracy()?;
                    (Vec::new(), pruned, acc_sel, acc_ft)
                }
            };

            let acc_prune = self.accuracy()?;
            let mut acc_final = acc_prune;
            if baseline - acc_prune < self.config.t1 {
                let masks = self.masks(&[], 1.0);
                self.fine_tune(&masks)?;
                acc_final = self.accuracy()?;
            }
            let mut rolled_back = Vec::new();
            if baseline - acc_final > self.config.t1 {
                rolled_back = rollback_last_prune(&mut self.model)?;
                observer.after_rollback(round, &self.model, &rolled_back);
                let masks = self.masks(&[], 1.0);
                self.fine_tune(&masks)?;
                acc_final = self.accuracy()?;
                outcome = Outcome::RolledBack;
            }
            final_accuracy = acc_final;

            rounds.push(RoundRecord {
                round,
                k,
                criterion: self.config.criterion,
                selected: selection.clone(),
                pruned: pruned.clone(),
                recovered,
                rolled_back,
                accuracy_after_selection: acc_sel,
                accuracy_after_finetune: acc_ft,
                accuracy_after_prune: acc_prune,
                accuracy_final: acc_final,
                cumulative_pruned: self.model.pruned_count(),
                remaining_per_layer: self.model.remaining_per_layer(),
                finetune_epochs: self.finetune_epochs_total - epochs_before,
                filters: self.filter_table(&scores)?,
            });
            log::info!(
                "{} round {round}: k={k} selected={} pruned={} total_pruned={}/{total} acc={acc_final:.4}",
                self.method,
                selection.len(),
                pruned.len(),
                self.model.pruned_count()
            );

            if outcome == Outcome::RolledBack {
                break;
            }
            if self.model.pruned_count() >= target {
                outcome = Outcome::TargetReached;
                break;
            }
            let pruned_set: BTreeSet<FilterRef> = pruned.into_iter().collect();
            previous = selection.into_iter().filter(|r| !pruned_set.contains(r)).collect();
        }

        let (_, compaction) = compact_model(&self.model)?;
        let final_scores = self.scores()?;
        let final_filters = self.filter_table(&final_scores)?;
        let pruned_per_layer = self
            .model
            .states()
            .iter()
            .map(|l| l.iter().filter(|s| s.status == FilterStatus::Pruned).count())
            .collect();
        let summary = RunSummary {
            outcome,
            rounds: rounds.len(),
            final_accuracy,
            test_accuracy: None,
            pruned_count: self.model.pruned_count(),
            pruned_fraction: self.model.pruned_count() as f64 / total as f64,
            pruned_per_layer,
            finetune_epochs_total: self.finetune_epochs_total,
            compaction,
            final_filters,
        };
        let log = ExperimentLog {
            header,
            rounds,
            summary,
        };
        log.check_consistency()?;
        Ok((self.model, log))
    }
}
