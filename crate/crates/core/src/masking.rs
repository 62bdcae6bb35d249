//! Three-valued filter masks, the attenuation action, and the per-filter
//! lifecycle (`Active <-> Attenuated -> Pruned`, with one-round rollback).

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::criteria::{filter_l1, ImportanceScores};
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::tensor::Scalar;

/// A filter addressed by convolution-layer index (counting conv layers only)
/// and output-filter index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FilterRef {
    pub layer: usize,
    pub filter: usize,
}

impl FilterRef {
    pub fn new(layer: usize, filter: usize) -> Self {
        FilterRef { layer, filter }
    }
}

impl fmt::Display for FilterRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.layer, self.filter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterStatus {
    Active,
    Attenuated,
    Pruned,
}

impl FilterStatus {
    pub fn name(self) -> &'static str {
        match self {
            FilterStatus::Active => "active",
            FilterStatus::Attenuated => "attenuated",
            FilterStatus::Pruned => "pruned",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            FilterStatus::Active => 0,
            FilterStatus::Attenuated => 1,
            FilterStatus::Pruned => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(FilterStatus::Active),
            1 => Some(FilterStatus::Attenuated),
            2 => Some(FilterStatus::Pruned),
            _ => None,
        }
    }
}

/// Why a status change happened; the legality of a transition depends on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionCause {
    Attenuation,
    Recovery,
    Prune,
    Rollback,
}

/// The lifecycle transitions the pruning schedule may perform.
pub fn is_legal_transition(from: FilterStatus, to: FilterStatus, cause: TransitionCause) -> bool {
    use FilterStatus::*;
    use TransitionCause::*;
    matches!(
        (from, to, cause),
        (Active, Attenuated, Attenuation)
            | (Attenuated, Attenuated, Attenuation)
            | (Attenuated, Active, Recovery)
            | (Attenuated, Pruned, Prune)
            | (Active, Pruned, Prune)
            | (Pruned, Attenuated, Rollback)
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterState {
    pub status: FilterStatus,
    pub attenuation_count: u32,
    pub recovery_count: u32,
}

impl Default for FilterState {
    fn default() -> Self {
        FilterState {
            status: FilterStatus::Active,
            attenuation_count: 0,
            recovery_count: 0,
        }
    }
}

impl FilterState {
    pub fn is_pruned(&self) -> bool {
        self.status == FilterStatus::Pruned
    }
}

/// Per-filter multiplier in `{0, F_a, 1}` for one convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMask {
    values: Vec<f64>,
}

impl LayerMask {
    pub fn ones(filters: usize) -> Self {
        LayerMask {
            values: vec![1.0; filters],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Config(format!("mask value {v} outside [0, 1]")));
        }
        Ok(LayerMask { values })
    }

    /// Mask of a layer during fine-tuning: 0 for pruned filters, `gradient_factor`
    /// for filters selected this round, 1 for everything else.
    pub fn for_layer(states: &[FilterState], selected: &BTreeSet<usize>, gradient_factor: f64) -> Self {
        let values = states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if s.is_pruned() {
                    0.0
                } else if selected.contains(&i) {
                    gradient_factor
                } else {
                    1.0
                }
            })
            .collect();
        LayerMask { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn live_mean(scores: &ImportanceScores, pruned: &[bool]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Data("mask computation needs at least one score".into()));
    }
    if pruned.len() != scores.len() {
        return Err(Error::shape("compute_mask", scores.len(), pruned.len()));
    }
    let (sum, count) = scores
        .scores
        .iter()
        .zip(pruned)
        .filter(|(_, &p)| !p)
        .fold((0.0, 0usize), |(s, c), (&v, _)| (s + v, c + 1));
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Hard pruning mask: 0 where `score < alpha * mean`, 1 otherwise. The mean
/// runs over unpruned filters; already-pruned filters stay at 0.
pub fn compute_mask_hard(scores: &ImportanceScores, pruned: &[bool], alpha: f64) -> Result<LayerMask> {
    let mean = live_mean(scores, pruned)?;
    let cut = alpha * mean;
    let values = scores
        .scores
        .iter()
        .zip(pruned)
        .map(|(&s, &p)| if p || s < cut { 0.0 } else { 1.0 })
        .collect();
    Ok(LayerMask { values })
}

/// Attenuation mask: 0 below `beta * mean`, `fa` below `alpha * mean`,
/// 1 otherwise.
pub fn compute_mask_attenuate(
    scores: &ImportanceScores,
    pruned: &[bool],
    alpha: f64,
    beta: f64,
    fa: f64,
) -> Result<LayerMask> {
    if beta.is_nan() || alpha.is_nan() || beta > alpha {
        return Err(Error::Config(format!(
            "prune threshold beta ({beta}) must not exceed attenuation threshold alpha ({alpha})"
        )));
    }
    if !(fa > 0.0 && fa < 1.0) {
        return Err(Error::Config(format!("attenuation factor {fa} outside (0, 1)")));
    }
    let mean = live_mean(scores, pruned)?;
    let (prune_cut, atten_cut) = (beta * mean, alpha * mean);
    let values = scores
        .scores
        .iter()
        .zip(pruned)
        .map(|(&s, &p)| {
            if p || s < prune_cut {
                0.0
            } else if s < atten_cut {
                fa
            } else {
                1.0
            }
        })
        .collect();
    Ok(LayerMask { values })
}

fn check_refs<T: Scalar>(model: &Model<T>, selection: &BTreeSet<FilterRef>) -> Result<()> {
    for &r in selection {
        let state = model.filter_state(r).ok_or(Error::UnknownFilter(r))?;
        if state.is_pruned() {
            return Err(Error::AlreadyPruned(r));
        }
    }
    Ok(())
}

/// Multiplies the selected filters' weights and bias by `fa` and marks them
/// attenuated. Nothing is modified if any selected filter is pruned.
pub fn apply_attenuation<T: Scalar>(model: &mut Model<T>, selection: &[FilterRef], fa: f64) -> Result<()> {
    let selection: BTreeSet<FilterRef> = selection.iter().copied().collect();
    check_refs(model, &selection)?;
    let factor = T::from_f64_lossy(fa);
    for r in selection {
        let conv = model.conv_mut(r.layer);
        conv.filter_mut(r.filter).iter_mut().for_each(|w| *w *= factor);
        conv.bias[r.filter] *= factor;
        let state = model.filter_state_mut(r);
        debug_assert!(is_legal_transition(state.status, FilterStatus::Attenuated, TransitionCause::Attenuation));
        state.status = FilterStatus::Attenuated;
        state.attenuation_count += 1;
    }
    Ok(())
}

/// Parameters of filters captured immediately before they were zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneSnapshot<T> {
    entries: Vec<SnapshotEntry<T>>,
}

#[derive(Debug, Clone, PartialEq)]
struct SnapshotEntry<T> {
    filter: FilterRef,
    weights: Vec<T>,
    bias: T,
}

impl<T> PruneSnapshot<T> {
    pub fn filters(&self) -> Vec<FilterRef> {
        self.entries.iter().map(|e| e.filter).collect()
    }
}

fn zero_and_snapshot<T: Scalar>(model: &mut Model<T>, targets: &BTreeSet<FilterRef>) -> Vec<FilterRef> {
    let mut entries = Vec::with_capacity(targets.len());
    for &r in targets {
        let conv = model.conv_mut(r.layer);
        let w = conv.filter_mut(r.filter);
        let weights = w.to_vec();
        w.fill(T::zero());
        let bias = std::mem::replace(&mut conv.bias[r.filter], T::zero());
        entries.push(SnapshotEntry {
            filter: r,
            weights,
            bias,
        });
        let state = model.filter_state_mut(r);
        debug_assert!(is_legal_transition(state.status, FilterStatus::Pruned, TransitionCause::Prune));
        state.status = FilterStatus::Pruned;
    }
    let pruned = targets.iter().copied().collect();
    model.set_last_prune(PruneSnapshot { entries });
    pruned
}

/// Per-layer absolute L1 thresholds: `factor` times the mean filter L1 norm
/// of each conv layer of `model`.
pub fn relative_thresholds<T: Scalar>(model: &Model<T>, factor: f64) -> Vec<f64> {
    (0..model.conv_count())
        .map(|l| {
            let s = filter_l1(model.conv(l)).scores;
            factor * s.iter().sum::<f64>() / s.len() as f64
        })
        .collect()
}

/// Zeroes and marks pruned every unpruned filter whose L1 norm is strictly
/// below its layer's threshold, returning the newly pruned filters.
///
/// If every unpruned filter of a layer falls below the threshold, the one with
/// the largest norm is kept. The pre-zeroing parameters replace the model's
/// rollback snapshot.
pub fn prune_zeroed<T: Scalar>(model: &mut Model<T>, thresholds: &[f64]) -> Result<Vec<FilterRef>> {
    prune_zeroed_limited(model, thresholds, usize::MAX)
}

/// [`prune_zeroed`] pruning at most `limit` filters; when more qualify, the
/// ones with the smallest `L1 / T2` ratio go first (ties by layer, filter).
pub fn prune_zeroed_limited<T: Scalar>(
    model: &mut Model<T>,
    thresholds: &[f64],
    limit: usize,
) -> Result<Vec<FilterRef>> {
    if thresholds.len() != model.conv_count() {
        return Err(Error::shape("prune_zeroed", model.conv_count(), thresholds.len()));
    }
    if let Some(t) = thresholds.iter().find(|t| t.is_nan() || **t < 0.0) {
        return Err(Error::Config(format!("prune threshold {t} must be nonnegative")));
    }
    let mut ranked: Vec<(f64, FilterRef)> = Vec::new();
    for (layer, &t2) in thresholds.iter().enumerate() {
        let norms = filter_l1(model.conv(layer)).scores;
        let states = &model.states()[layer];
        let live: Vec<usize> = (0..norms.len()).filter(|&i| !states[i].is_pruned()).collect();
        let mut below: Vec<usize> = live.iter().copied().filter(|&i| norms[i] < t2).collect();
        if !live.is_empty() && below.len() == live.len() {
            let keep = *live
                .iter()
                .max_by(|&&a, &&b| norms[a].total_cmp(&norms[b]).then(b.cmp(&a)))
                .unwrap();
            below.retain(|&i| i != keep);
        }
        ranked.extend(below.into_iter().map(|filter| (norms[filter] / t2, FilterRef { layer, filter })));
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let targets: BTreeSet<FilterRef> = ranked.into_iter().take(limit).map(|(_, r)| r).collect();
    Ok(zero_and_snapshot(model, &targets))
}

/// Immediately zeroes and prunes the selected filters (hard pruning).
///
/// Fails without modifying the model if a filter is already pruned or if the
/// selection would leave a conv layer without an unpruned filter.
pub fn prune_selected<T: Scalar>(model: &mut Model<T>, selection: &[FilterRef]) -> Result<Vec<FilterRef>> {
    let targets: BTreeSet<FilterRef> = selection.iter().copied().collect();
    check_refs(model, &targets)?;
    for layer in 0..model.conv_count() {
        let live = model.states()[layer].iter().filter(|s| !s.is_pruned()).count();
        let hit = targets.iter().filter(|r| r.layer == layer).count();
        if hit > 0 && hit >= live {
            return Err(Error::Starvation(format!(
                "pruning {hit} filters would leave conv layer {layer} with no unpruned filter"
            )));
        }
    }
    Ok(zero_and_snapshot(model, &targets))
}

/// Restores the filters zeroed by the most recent prune call and marks them
/// attenuated. The snapshot is consumed.
pub fn rollback_last_prune<T: Scalar>(model: &mut Model<T>) -> Result<Vec<FilterRef>> {
    let snapshot = model.take_last_prune().ok_or(Error::NoSnapshot)?;
    let mut restored = Vec::with_capacity(snapshot.entries.len());
    for entry in snapshot.entries {
        let r = entry.filter;
        let conv = model.conv_mut(r.layer);
        conv.filter_mut(r.filter).copy_from_slice(&entry.weights);
        conv.bias[r.filter] = entry.bias;
        let state = model.filter_state_mut(r);
        debug_assert!(is_legal_transition(state.status, FilterStatus::Attenuated, TransitionCause::Rollback));
        state.status = FilterStatus::Attenuated;
        restored.push(r);
    }
    Ok(restored)
}

/// Marks as recovered every filter that was selected last round, is not
/// selected now, and is not pruned. Returns the recovered filters.
pub fn record_recovery(
    states: &mut [Vec<FilterState>],
    previous: &[FilterRef],
    current: &[FilterRef],
) -> Vec<FilterRef> {
    let current: BTreeSet<FilterRef> = current.iter().copied().collect();
    let previous: BTreeSet<FilterRef> = previous.iter().copied().collect();
    let mut recovered = Vec::new();
    for r in previous.difference(&current) {
        let Some(state) = states.get_mut(r.layer).and_then(|l| l.get_mut(r.filter)) else {
            continue;
        };
        if state.is_pruned() {
            continue;
        }
        state.recovery_count += 1;
        state.status = FilterStatus::Active;
        recovered.push(*r);
    }
    recovered
}
