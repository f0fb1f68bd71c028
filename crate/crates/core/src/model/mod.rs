//! Small transformer encoder trained with a masked-token head and a
//! relation-prediction head.
//!
//! Everything is in `f64` and the reverse pass is hand-written, so gradients
//! can be checked against central differences.

pub mod checkpoint;
pub mod encoder;
pub mod linalg;
pub mod loss;
pub mod optim;
pub mod params;
pub mod train;

use thiserror::Error;

pub use checkpoint::Checkpoint;
pub use encoder::{forward, forward_batch, ForwardOutput};
pub use loss::{batch_gradients, evaluate_batch, loss, BatchStats, DropoutStreams, InstanceStats, LossParts, MlmReduction};
pub use optim::{adamw_scalar, train_step, AdamWConfig, OptimizerState, Schedule, StepOutput};
pub use params::{Gradients, Init, Layout, ModelConfig, Parameters, Span};
pub use train::{pretrain, resume, write_full_csv, write_metrics_csv, LogRecord, PretrainOutcome, RunConfig};

/// Standard deviation of initial weights.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("schedule exhausted: {step} of {total} steps already taken")]
    ScheduleExhausted { step: usize, total: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}
