//! End-to-end runs: build data and model from a [`RunConfig`], run one or
//! both pruning methods, and evaluate on the held-out test split.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use crate::data::Dataset;
use crate::error::Result;
use crate::nn::{evaluate, Model};
use crate::scheduler::{run_pruning, warm_up, ExperimentLog, Method};

/// Partitioned data plus the freshly initialised model.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub model: Model<f32>,
}

pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    config.validate()?;
    let data = config.load_dataset()?;
    let (train, validation, test) = data.partition()?;
    for (name, part) in [("train", &train), ("validation", &validation), ("test", &test)] {
        if part.is_empty() {
            return Err(crate::Error::Data(format!("{name} split is empty")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed());
    let model = Model::build(data.sample_shape(), &config.model.layers, &mut rng)?;
    if model.classes() < data.class_count {
        return Err(crate::Error::Config(format!(
            "model has {} outputs but the data has {} classes",
            model.classes(),
            data.class_count
        )));
    }
    log::info!(
        "data: {} train / {} validation / {} test, {} filters",
        train.len(),
        validation.len(),
        test.len(),
        model.total_filters()
    );
    Ok(Prepared {
        train,
        validation,
        test,
        model,
    })
}

/// Warm-up training only. Returns the trained model, epochs used and
/// validation accuracy.
pub fn train_only(config: &RunConfig, prepared: &Prepared) -> Result<(Model<f32>, usize, f64)> {
    let mut model = prepared.model.clone();
    let (epochs, acc) = warm_up(
        &mut model,
        &prepared.train,
        &prepared.validation,
        &config.prune,
        &config.train_config(),
    )?;
    Ok((model, epochs, acc))
}

/// Runs one method from the prepared initial model and fills in the test
/// accuracy of the final (pruned) model.
pub fn run_method(config: &RunConfig, method: Method, prepared: &Prepared) -> Result<(Model<f32>, ExperimentLog)> {
    let (model, mut log) = run_pruning(
        method,
        prepared.model.clone(),
        &prepared.train,
        &prepared.validation,
        &config.prune,
        &config.train_config(),
    )?;
    log.summary.test_accuracy = Some(evaluate(&model, &prepared.test.images, &prepared.test.labels)?);
    log::info!(
        "{}: {:?} after {} rounds, {}/{} pruned, validation {:.4}",
        log.label(),
        log.summary.outcome,
        log.summary.rounds,
        log.summary.pruned_count,
        log.header.total_filters,
        log.summary.final_accuracy
    );
    Ok((model, log))
}

/// Attenuation and hard pruning from the same initial model, data and seeds.
pub fn compare(config: &RunConfig) -> Result<Vec<ExperimentLog>> {
    let prepared = prepare(config)?;
    [Method::Attenuation, Method::Hard]
        .into_iter()
        .map(|m| run_method(config, m, &prepared).map(|(_, log)| log))
        .collect()
}
