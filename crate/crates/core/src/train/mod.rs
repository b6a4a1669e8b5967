//! Optimiser, reversal schedule, training loop and checkpoints.

mod adam;
mod checkpoint;
mod gradcheck;
mod schedule;
mod trainer;

use thiserror::Error;

use crate::autodiff::GraphError;
use crate::config::ConfigError;
use crate::model::{Model, ModelError};
use crate::signal::SignalError;

pub use adam::{Adam, BETA1, BETA2, EPSILON};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_SCHEMA_VERSION, MODEL_BLOB,
    MODEL_JSON,
};
pub use gradcheck::{check_end_to_end, check_model, small_check_config, ModelGradCheck};
pub use schedule::{lambda_schedule, progress};
pub use trainer::{accuracy, train, EpochRecord, TrainHistory};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no source samples to train on")]
    EmptySource,
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    Diverged {
        epoch: usize,
        batch: usize,
        /// Parameters before the failing step.
        last_good: Box<Model>,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}
