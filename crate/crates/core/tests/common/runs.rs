use std::collections::BTreeMap;
use std::path::Path;

use attenprune::harness::{compare, emit_reports, DataSource, RunConfig};
use attenprune::nn::{LayerSpec, Model};
use attenprune::scheduler::{PruneConfig, PruneThreshold, RoundObserver};
use attenprune::{ExperimentLog, FilterRef, Result};

/// A desk-shaped config small enough for ordinary tests.
pub fn tiny_config(seed: u64) -> RunConfig {
    let mut c = RunConfig::desk();
    c.seed = seed;
    c.data.source = DataSource::Synthetic {
        classes: 3,
        per_class: 60,
        size: 8,
        channels: 1,
        noise: 0.3,
    };
    c.model.layers = vec![
        LayerSpec::conv(4, 3),
        LayerSpec::Relu,
        LayerSpec::MaxPool,
        LayerSpec::conv(6, 3),
        LayerSpec::Relu,
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 3 },
    ];
    c.train.epochs = 3;
    c.train.batch_size = 16;
    c.prune.t1 = 0.1;
    c.prune.finetune_epochs = 1;
    c.prune.max_rounds = 20;
    c
}

/// Runs `compare`, stores the logs and reports under `dir` and returns every
/// written file's bytes keyed by relative path.
/// File contents keyed by path relative to the tree root.
pub type Tree = BTreeMap<String, Vec<u8>>;

pub fn compare_into(config: &RunConfig, dir: &Path) -> Result<(Vec<ExperimentLog>, Tree)> {
    let logs = compare(config)?;
    for log in &logs {
        log.save(&dir.join(format!("{}.jsonl", log.label())))?;
    }
    emit_reports(&logs, &dir.join("reports"))?;
    Ok((logs, read_tree(dir)))
}

pub fn read_tree(dir: &Path) -> Tree {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// T1 = 0 with a large prune threshold and step: the first prune costs
/// accuracy and is undone.
pub fn adversarial_config() -> PruneConfig {
    PruneConfig {
        a: 6,
        t1: 0.0,
        t2: PruneThreshold::Relative(10.0),
        accuracy_floor: 0.0,
        finetune_epochs: 1,
        ..PruneConfig::default()
    }
}

/// Snapshots the model before every prune and after a rollback.
#[derive(Default)]
pub struct Capture {
    pub before_prune: Vec<(usize, Model<f32>)>,
    pub rollback: Option<(usize, Model<f32>, Vec<FilterRef>)>,
}

impl RoundObserver for Capture {
    fn before_prune(&mut self, round: usize, model: &Model<f32>) {
        self.before_prune.push((round, model.clone()));
    }

    fn after_rollback(&mut self, round: usize, model: &Model<f32>, restored: &[FilterRef]) {
        self.rollback = Some((round, model.clone(), restored.to_vec()));
    }
}
