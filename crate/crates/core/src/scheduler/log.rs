//! Experiment log: one header record, one record per round and a summary,
//! stored as JSON lines.
//!
//! Every line is an object whose `record` field is `header`, `round` or
//! `summary`; the remaining field names are those of [`RunHeader`],
//! [`RoundRecord`] and [`RunSummary`].

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::compact::CompactionStats;
use super::config::{Method, PruneConfig};
use crate::criteria::Criterion;
use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::masking::{FilterRef, FilterStatus};
use crate::nn::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub method: Method,
    pub criterion: Criterion,
    pub prune: PruneConfig,
    pub train: TrainConfig,
    pub filters_per_layer: Vec<usize>,
    pub total_filters: usize,
    pub target_pruned: usize,
    pub warmup_epochs: usize,
    pub baseline_accuracy: f64,
    /// Resolved per-layer L1 prune thresholds.
    pub thresholds: Vec<f64>,
}

/// Per-filter snapshot taken at the end of a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRecord {
    pub layer: usize,
    pub filter: usize,
    pub status: FilterStatus,
    pub attenuation_count: u32,
    pub recovery_count: u32,
    pub l1_norm: f64,
    /// Criterion score used for this round's selection.
    pub raw_score: f64,
    pub normalized_score: f64,
    /// Three-valued mask (`0`, `F_a` or `1`) of the selection-time
    /// normalized scores under the configured `alpha` and `beta`.
    pub threshold_mask: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub k: usize,
    pub criterion: Criterion,
    pub selected: Vec<FilterRef>,
    pub pruned: Vec<FilterRef>,
    pub recovered: Vec<FilterRef>,
    pub rolled_back: Vec<FilterRef>,
    /// Validation accuracy right after attenuation (or hard pruning).
    pub accuracy_after_selection: f64,
    pub accuracy_after_finetune: f64,
    pub accuracy_after_prune: f64,
    pub accuracy_final: f64,
    pub cumulative_pruned: usize,
    pub remaining_per_layer: Vec<usize>,
    pub finetune_epochs: usize,
    pub filters: Vec<FilterRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    TargetReached,
    RolledBack,
    /// Every layer is down to its last unpruned filter.
    Exhausted,
    MaxRounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub outcome: Outcome,
    pub rounds: usize,
    pub final_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub pruned_count: usize,
    pub pruned_fraction: f64,
    pub pruned_per_layer: Vec<usize>,
    pub finetune_epochs_total: usize,
    pub compaction: CompactionStats,
    pub final_filters: Vec<FilterRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentLog {
    pub header: RunHeader,
    pub rounds: Vec<RoundRecord>,
    pub summary: RunSummary,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum LogLine {
    Header(RunHeader),
    Round(RoundRecord),
    Summary(RunSummary),
}

impl ExperimentLog {
    /// Label used in report columns and file names, e.g. `attenuation-l1`.
    pub fn label(&self) -> String {
        format!("{}-{}", self.header.method, self.header.criterion)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: LogLine| {
            out.push_str(&serde_json::to_string(&line).expect("log records serialize"));
            out.push('\n');
        };
        push(LogLine::Header(self.header.clone()));
        for r in &self.rounds {
            push(LogLine::Round(r.clone()));
        }
        push(LogLine::Summary(self.summary.clone()));
        out
    }

    pub fn from_jsonl(reader: impl BufRead, path: &Path) -> Result<Self> {
        let mut header = None;
        let mut rounds = Vec::new();
        let mut summary = None;
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LogLine = serde_json::from_str(&line)
                .map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
            match parsed {
                LogLine::Header(h) if header.is_none() => header = Some(h),
                LogLine::Round(r) if header.is_some() && summary.is_none() => rounds.push(r),
                LogLine::Summary(s) if header.is_some() && summary.is_none() => summary = Some(s),
                _ => return Err(Error::format(path, format!("line {}: record out of order", n + 1))),
            }
        }
        match (header, summary) {
            (Some(header), Some(summary)) => Ok(ExperimentLog {
                header,
                rounds,
                summary,
            }),
            _ => Err(Error::format(path, "log needs a header and a summary record")),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_jsonl().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(std::io::BufReader::new(file), path)
    }

    /// Checks the bookkeeping invariants of a finished run.
    pub fn check_consistency(&self) -> Result<()> {
        let mut cumulative = 0usize;
        let mut last_k: Option<usize> = None;
        for r in &self.rounds {
            cumulative = cumulative + r.pruned.len() - r.rolled_back.len();
            if cumulative != r.cumulative_pruned {
                return Err(Error::Internal(format!(
                    "round {}: cumulative pruned {} but records sum to {cumulative}",
                    r.round, r.cumulative_pruned
                )));
            }
            if r.remaining_per_layer.contains(&0) {
                return Err(Error::Internal(format!("round {}: a layer has no filters left", r.round)));
            }
            let expected_k = last_k.unwrap_or(self.header.prune.k0) + self.header.prune.a;
            if r.k != expected_k {
                return Err(Error::Internal(format!("round {}: k = {} but expected {expected_k}", r.round, r.k)));
            }
            last_k = Some(r.k);
        }
        if cumulative != self.summary.pruned_count {
            return Err(Error::Internal(format!(
                "summary reports {} pruned filters, rounds sum to {cumulative}",
                self.summary.pruned_count
            )));
        }
        let pruned_final = self
            .summary
            .final_filters
            .iter()
            .filter(|f| f.status == FilterStatus::Pruned)
            .count();
        if pruned_final != cumulative || self.summary.compaction.removed_filters != cumulative {
            return Err(Error::Internal(format!(
                "final filter table has {pruned_final} pruned and compaction removed {}, expected {cumulative}",
                self.summary.compaction.removed_filters
            )));
        }
        Ok(())
    }
}
