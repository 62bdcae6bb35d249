//! End-to-end pruning schedules and the tools that inspect their results.

pub mod compact;
pub mod config;
pub mod impact;
pub mod log;
pub mod run;

pub use compact::{compact_model, CompactionStats};
pub use config::{AttenuationMode, Method, PruneConfig, PruneThreshold};
pub use impact::{next_layer_impact, CandidateSet};
pub use log::{ExperimentLog, FilterRecord, Outcome, RoundRecord, RunHeader, RunSummary};
pub use run::{run_attenuation_pruning, run_hard_pruning, run_pruning, run_pruning_observed, warm_up, RoundObserver};
