//! Recurrent networks for congestion detection and volume prediction.
//!
//! A single LSTM layer feeds a per-step linear head; classification heads add
//! a softmax. Training runs full backpropagation through time over whole
//! days and updates with ADAM.

pub mod adam;
pub mod head;
pub mod loss;
pub mod lstm;
pub mod metrics;
pub mod network;
pub mod train;

use thiserror::Error;

pub use head::{HeadMode, HeadParams};
pub use loss::LossKind;
pub use lstm::LstmParams;
pub use network::{classify_with_confidence, Network, NetworkConfig, NormalizationStats};
pub use train::{evaluate, train, Example, Targets, TrainingSchedule, TrainingTrace};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite input at step {step}, feature {feature}")]
    NonFinite { step: usize, feature: usize },
    #[error("feature {0} has no spread in the training data")]
    DegenerateFeature(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },
    #[error("empty training set")]
    EmptyDataset,
    #[error("unsupported model version {0}")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
