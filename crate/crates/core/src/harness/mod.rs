//! Configuration, experiment orchestration and report emission.

pub mod config;
pub mod experiment;
pub mod report;

pub use config::{DataConfig, DataSource, ModelConfig, Overrides, RunConfig};
pub use experiment::{compare, prepare, run_method, train_only, Prepared};
pub use report::{attenuation_histogram, emit_reports};
