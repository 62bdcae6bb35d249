//! Convolutional network filter pruning by gradual attenuation.
//!
//! Instead of zeroing low-importance filters outright, each round scales the
//! selected filters by an attenuation factor and fine-tunes. Filters that keep
//! shrinking fall under a norm threshold and are pruned; filters that regain
//! importance recover. A plain hard-pruning schedule is included as the
//! baseline.
//!
//! * [`nn`]: tensors, conv/relu/pool/dense layers, SGD with per-filter masks,
//!   checkpoints.
//! * [`criteria`]: L1, L2, standard deviation and cosine filter scores,
//!   normalisation and bottom-k selection.
//! * [`masking`]: filter states, masks, attenuation, pruning and rollback.
//! * [`scheduler`]: the round loop, experiment logs and model compaction.
//! * [`harness`]: run configs, data sources and reports.

pub mod criteria;
pub mod data;
pub mod error;
pub mod harness;
mod io_util;
pub mod masking;
pub mod nn;
pub mod scheduler;
pub mod tensor;

pub use criteria::{Criterion, ImportanceScores};
pub use data::{Dataset, Split};
pub use error::{Error, Result};
pub use harness::{RunConfig, Overrides};
pub use masking::{FilterRef, FilterState, FilterStatus};
pub use nn::{Model, TrainConfig};
pub use scheduler::{ExperimentLog, Method, PruneConfig, PruneThreshold};
pub use tensor::{Scalar, Tensor};
