//! Property checks that back both the integration tests and the acceptance
//! runner. Each returns a small report; callers decide the thresholds.
#![allow(dead_code)]

use std::collections::BTreeSet;

use attenprune::masking::{apply_attenuation, compute_mask_attenuate, compute_mask_hard, prune_selected};
use attenprune::nn::{argmax, conv2d_forward, Layer, Model};
use attenprune::criteria::filter_l1;
use attenprune::scheduler::{compact_model, next_layer_impact, CandidateSet};
use attenprune::FilterRef;
use rand::Rng;

use super::{expected_compact_params, mask_case, oracle_mask, random_input, random_model, rng, spearman};

#[derive(Debug, Default)]
pub struct MaskReport {
    pub cases: usize,
    pub mismatches: usize,
    /// Scores lying exactly on `alpha * mean` or `beta * mean`.
    pub boundary_scores: usize,
}

pub fn mask_equivalence(cases: u64) -> MaskReport {
    let mut report = MaskReport::default();
    for seed in 0..cases {
        let c = mask_case(seed);
        let fa = 0.8;
        let hard = compute_mask_hard(&c.scores, &c.pruned, c.alpha).unwrap();
        let att = compute_mask_attenuate(&c.scores, &c.pruned, c.alpha, c.beta, fa).unwrap();
        let want_hard = oracle_mask(&c.scores.scores, &c.pruned, c.alpha, None, fa);
        let want_att = oracle_mask(&c.scores.scores, &c.pruned, c.alpha, Some(c.beta), fa);
        report.cases += 1;
        if hard.values() != want_hard.as_slice() || att.values() != want_att.as_slice() {
            report.mismatches += 1;
        }
        let live: Vec<f64> = c.scores.scores.iter().zip(&c.pruned).filter(|(_, p)| !**p).map(|(s, _)| *s).collect();
        let mean = live.iter().sum::<f64>() / live.len() as f64;
        report.boundary_scores += live.iter().filter(|&&s| s == c.alpha * mean || s == c.beta * mean).count();
    }
    report
}

#[derive(Debug, Default)]
pub struct ScalingReport {
    pub models: usize,
    /// Worst `|new - 0.8 old|` over the attenuated channel.
    pub max_channel_error: f64,
    pub other_channels_identical: bool,
}

/// Attenuates one random filter of one random conv layer by 0.8 and compares
/// that conv layer's output before and after.
pub fn attenuation_scaling(models: u64) -> ScalingReport {
    let mut report = ScalingReport {
        other_channels_identical: true,
        ..Default::default()
    };
    for seed in 0..models {
        let mut r = rng(seed + 10_000);
        let mut model: Model<f64> = random_model(seed + 10_000);
        let layer = r.random_range(0..model.conv_count());
        let filter = r.random_range(0..model.conv(layer).filters());
        let x = random_input(&model, 4, &mut r);
        let pos = model.conv_position(layer);
        let input = model.forward_prefix(&x, pos).unwrap();
        let before = conv2d_forward(&input, model.conv(layer)).unwrap();
        apply_attenuation(&mut model, &[FilterRef::new(layer, filter)], 0.8).unwrap();
        let after = conv2d_forward(&input, model.conv(layer)).unwrap();
        let s = before.shape().to_vec();
        let plane = s[2] * s[3];
        for n in 0..s[0] {
            for ch in 0..s[1] {
                let off = (n * s[1] + ch) * plane;
                let b = &before.data()[off..off + plane];
                let a = &after.data()[off..off + plane];
                if ch == filter {
                    for (x, y) in b.iter().zip(a) {
                        report.max_channel_error = report.max_channel_error.max((y - 0.8 * x).abs());
                    }
                } else if b.iter().zip(a).any(|(x, y)| x.to_bits() != y.to_bits()) {
                    report.other_channels_identical = false;
                }
            }
        }
        report.models += 1;
    }
    report
}

#[derive(Debug, Default)]
pub struct CompactionReport {
    pub models: usize,
    pub inputs: usize,
    pub max_output_diff: f32,
    pub argmax_mismatches: usize,
    pub accounting_errors: Vec<String>,
}

/// Random f32 models with random pruned subsets (at least one filter left per
/// layer), masked forward vs compacted forward.
pub fn compaction_equivalence(models: u64, inputs: usize) -> CompactionReport {
    let mut report = CompactionReport::default();
    for seed in 0..models {
        let mut r = rng(seed + 20_000);
        let mut model: Model<f32> = random_model(seed + 20_000);
        let mut selection = Vec::new();
        for l in 0..model.conv_count() {
            let f = model.conv(l).filters();
            let drop = r.random_range(0..f);
            let mut idx: Vec<usize> = (0..f).collect();
            for i in (1..f).rev() {
                idx.swap(i, r.random_range(0..=i));
            }
            selection.extend(idx[..drop].iter().map(|&i| FilterRef::new(l, i)));
        }
        prune_selected(&mut model, &selection).unwrap();
        let (compact, stats) = compact_model(&model).unwrap();
        let x = random_input(&model, inputs, &mut r);
        let masked = model.forward(&x).unwrap();
        let small = compact.forward(&x).unwrap();
        report.max_output_diff = report.max_output_diff.max(masked.max_abs_diff(&small));
        for i in 0..inputs {
            if argmax(masked.row(i)) != argmax(small.row(i)) {
                report.argmax_mismatches += 1;
            }
        }
        let expected = expected_compact_params(&model);
        let checks = [
            ("removed filters", stats.removed_filters, selection.len()),
            ("params before", stats.params_before, model.param_count()),
            ("params after", stats.params_after, compact.param_count()),
            ("params after (oracle)", stats.params_after, expected),
            ("macs after", stats.macs_after, compact.mac_count()),
            ("compact filters", compact.total_filters(), model.total_filters() - selection.len()),
        ];
        for (what, got, want) in checks {
            if got != want {
                report.accounting_errors.push(format!("model {seed}: {what} {got} != {want}"));
            }
        }
        report.models += 1;
        report.inputs += inputs;
    }
    report
}

#[derive(Debug, Default)]
pub struct ImpactReport {
    pub models: usize,
    pub mean_spearman: f64,
    pub max_ablation_error: f64,
}

/// Per-filter impact of the first conv layer against its L1 score, and
/// against the zero-ablation oracle at the next conv's pre-activation.
pub fn impact_diagnostic(models: u64) -> ImpactReport {
    let mut report = ImpactReport::default();
    let mut rho_sum = 0.0;
    for seed in 0..models {
        let mut r = rng(seed + 30_000);
        let model: Model<f64> = random_model(seed + 30_000);
        let probe = random_input(&model, 8, &mut r);
        let next_pos = model.conv_position(1);
        let full = model.forward_prefix(&probe, next_pos + 1).unwrap();
        let filters = model.conv(0).filters();
        let mut impacts = Vec::with_capacity(filters);
        for f in 0..filters {
            let impact = next_layer_impact(&model, 0, &CandidateSet::new(0, [f]), &probe).unwrap();
            let mut ablated = model.clone();
            if let Layer::Conv(c) = ablated.layer_mut(model.conv_position(0)) {
                c.filter_mut(f).iter_mut().for_each(|w| *w = 0.0);
                c.bias[f] = 0.0;
            }
            let cut = ablated.forward_prefix(&probe, next_pos + 1).unwrap();
            let oracle: f64 = full.data().iter().zip(cut.data()).map(|(a, b)| (a - b).abs()).sum::<f64>()
                / probe.shape()[0] as f64;
            let err = (impact - oracle).abs() / oracle.abs().max(1e-300);
            report.max_ablation_error = report.max_ablation_error.max(if oracle == 0.0 { impact.abs() } else { err });
            impacts.push(impact);
        }
        rho_sum += spearman(&filter_l1(model.conv(0)).scores, &impacts);
        report.models += 1;
    }
    report.mean_spearman = rho_sum / models as f64;
    report
}

/// Filters whose parameters differ bitwise between two models.
pub fn differing_filters(a: &Model<f32>, b: &Model<f32>, refs: &[FilterRef]) -> BTreeSet<FilterRef> {
    refs.iter()
        .copied()
        .filter(|r| {
            let (ca, cb) = (a.conv(r.layer), b.conv(r.layer));
            ca.bias[r.filter].to_bits() != cb.bias[r.filter].to_bits()
                || ca.filter(r.filter).iter().zip(cb.filter(r.filter)).any(|(x, y)| x.to_bits() != y.to_bits())
        })
        .collect()
}
