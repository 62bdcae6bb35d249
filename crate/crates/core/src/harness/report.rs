//! Report files derived from experiment logs only, so regenerating them from
//! stored logs is byte-identical.
//!
//! | file | columns |
//! |---|---|
//! | `accuracy_vs_pruned.csv` | method, criterion, round, pruned_filters, accuracy |
//! | `layer_profile.csv` | layer, original, then one pruned-count column per run label |
//! | `layer_profile_rounds.csv` | label, round, layer, original, pruned, remaining |
//! | `attenuation_histogram.csv` | method, criterion, attenuation_count, surviving_filters |
//! | `<label>_scores.csv` | round, layer, filter, criterion, raw_score, normalized_score |
//! | `<label>_filter_states.csv` | round, layer, filter, state, attenuation_count, recovery_count, l1_norm |
//! | `summary.json` | per-run outcome, accuracies and compaction figures |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::masking::FilterStatus;
use crate::scheduler::{CompactionStats, ExperimentLog, Outcome};

pub const ACCURACY_CURVE: &str = "accuracy_vs_pruned.csv";
pub const LAYER_PROFILE: &str = "layer_profile.csv";
pub const LAYER_PROFILE_ROUNDS: &str = "layer_profile_rounds.csv";
pub const HISTOGRAM: &str = "attenuation_histogram.csv";
pub const SUMMARY: &str = "summary.json";

pub fn accuracy_curve_csv(logs: &[ExperimentLog]) -> String {
    let mut out = String::from("method,criterion,round,pruned_filters,accuracy\n");
    for log in logs {
        let h = &log.header;
        let _ = writeln!(out, "{},{},0,0,{}", h.method, h.criterion, h.baseline_accuracy);
        for r in &log.rounds {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                h.method, h.criterion, r.round, r.cumulative_pruned, r.accuracy_final
            );
        }
    }
    out
}

pub fn layer_profile_csv(logs: &[ExperimentLog]) -> Result<String> {
    let mut out = String::from("layer,original");
    for log in logs {
        let _ = write!(out, ",{}", log.label());
    }
    out.push('\n');
    let Some(first) = logs.first() else {
        return Ok(out);
    };
    let original = &first.header.filters_per_layer;
    if logs.iter().any(|l| &l.header.filters_per_layer != original) {
        return Err(Error::Config("layer profile needs logs of the same architecture".into()));
    }
    for (layer, n) in original.iter().enumerate() {
        let _ = write!(out, "{layer},{n}");
        for log in logs {
            let _ = write!(out, ",{}", log.summary.pruned_per_layer[layer]);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn layer_profile_rounds_csv(logs: &[ExperimentLog]) -> String {
    let mut out = String::from("label,round,layer,original,pruned,remaining\n");
    for log in logs {
        let label = log.label();
        for r in &log.rounds {
            for (layer, (&orig, &rem)) in log
                .header
                .filters_per_layer
                .iter()
                .zip(&r.remaining_per_layer)
                .enumerate()
            {
                let _ = writeln!(out, "{label},{},{layer},{orig},{},{rem}", r.round, orig - rem);
            }
        }
    }
    out
}

/// Surviving (unpruned) filters binned by how often they were attenuated.
pub fn attenuation_histogram(log: &ExperimentLog) -> BTreeMap<u32, usize> {
    let mut bins = BTreeMap::new();
    for f in log.summary.final_filters.iter().filter(|f| f.status != FilterStatus::Pruned) {
        *bins.entry(f.attenuation_count).or_insert(0) += 1;
    }
    bins
}

pub fn histogram_csv(logs: &[ExperimentLog]) -> String {
    let mut out = String::from("method,criterion,attenuation_count,surviving_filters\n");
    for log in logs {
        for (count, n) in attenuation_histogram(log) {
            let _ = writeln!(out, "{},{},{count},{n}", log.header.method, log.header.criterion);
        }
    }
    out
}

pub fn scores_csv(log: &ExperimentLog) -> String {
    let mut out = String::from("round,layer,filter,criterion,raw_score,normalized_score\n");
    for r in &log.rounds {
        for f in &r.filters {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.round, f.layer, f.filter, r.criterion, f.raw_score, f.normalized_score
            );
        }
    }
    out
}

pub fn filter_states_csv(log: &ExperimentLog) -> String {
    let mut out = String::from("round,layer,filter,state,attenuation_count,recovery_count,l1_norm\n");
    for r in &log.rounds {
        for f in &r.filters {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.round,
                f.layer,
                f.filter,
                f.status.name(),
                f.attenuation_count,
                f.recovery_count,
                f.l1_norm
            );
        }
    }
    out
}

#[derive(Debug, Serialize)]
struct RunEntry<'a> {
    label: String,
    outcome: Outcome,
    rounds: usize,
    baseline_accuracy: f64,
    final_accuracy: f64,
    test_accuracy: Option<f64>,
    total_filters: usize,
    pruned_count: usize,
    pruned_fraction: f64,
    pruned_per_layer: &'a [usize],
    finetune_epochs_total: usize,
    compaction: &'a CompactionStats,
}

pub fn summary_json(logs: &[ExperimentLog]) -> String {
    let entries: Vec<RunEntry> = logs
        .iter()
        .map(|l| RunEntry {
            label: l.label(),
            outcome: l.summary.outcome,
            rounds: l.summary.rounds,
            baseline_accuracy: l.header.baseline_accuracy,
            final_accuracy: l.summary.final_accuracy,
            test_accuracy: l.summary.test_accuracy,
            total_filters: l.header.total_filters,
            pruned_count: l.summary.pruned_count,
            pruned_fraction: l.summary.pruned_fraction,
            pruned_per_layer: &l.summary.pruned_per_layer,
            finetune_epochs_total: l.summary.finetune_epochs_total,
            compaction: &l.summary.compaction,
        })
        .collect();
    let mut out = serde_json::to_string_pretty(&serde_json::json!({ "runs": entries })).expect("summary serializes");
    out.push('\n');
    out
}

/// Writes every report for `logs` into `out_dir` and returns the paths in
/// write order.
pub fn emit_reports(logs: &[ExperimentLog], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut labels: Vec<String> = logs.iter().map(|l| l.label()).collect();
    labels.sort();
    if labels.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("reports need logs with distinct method/criterion labels".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = vec![
        (ACCURACY_CURVE.to_string(), accuracy_curve_csv(logs)),
        (LAYER_PROFILE.to_string(), layer_profile_csv(logs)?),
        (LAYER_PROFILE_ROUNDS.to_string(), layer_profile_rounds_csv(logs)),
        (HISTOGRAM.to_string(), histogram_csv(logs)),
    ];
    for log in logs {
        files.push((format!("{}_scores.csv", log.label()), scores_csv(log)));
        files.push((format!("{}_filter_states.csv", log.label()), filter_states_csv(log)));
    }
    files.push((SUMMARY.to_string(), summary_json(logs)));
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = out_dir.join(name);
        write_atomic(&path, body.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
