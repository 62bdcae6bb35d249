//! Minimal deterministic CNN engine.

pub mod checkpoint;
pub mod conv;
pub mod layers;
pub mod loss;
pub mod model;
pub mod train;

pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvLayer};
pub use layers::{DenseGrads, DenseLayer};
pub use loss::{batch_softmax_xent, softmax, softmax_xent};
pub use model::{argmax, Gradients, Layer, LayerGrads, LayerSpec, Model};
pub use train::{evaluate, sgd_step_masked, TrainConfig, Trainer};
