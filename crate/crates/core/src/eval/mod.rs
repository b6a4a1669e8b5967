//! Cross-validation protocols, metrics, ablation variants, attention export
//! and the domain probe.

mod ablation;
mod attention;
mod folds;
mod metrics;
mod probe;
mod protocol;

use thiserror::Error;

use crate::config::ConfigError;
use crate::model::ModelError;
use crate::signal::SignalError;
use crate::train::TrainError;

pub use ablation::Variant;
pub use attention::{export_attention, AttentionReport, REGIONS_CSV, TEMPORAL_CSV};
pub use folds::{
    kfold_video_split, lopo_split, make_plan, units_of, verify_plan, Fold, FoldPlan, Paradigm, Unit,
};
pub use metrics::{Confusion, MetricsRecord};
pub use probe::{domain_probe, ProbeConfig, ProbeResult};
pub use protocol::{
    evaluate, fold_data, run_fold, run_protocol, thread_count, FoldData, FoldFailure, FoldResult,
    ProtocolReport, THREADS_ENV,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("participant {participant} has {trials} trials, fewer than {folds} folds")]
    TooFewTrials {
        participant: u32,
        trials: usize,
        folds: usize,
    },
    #[error("leave-one-participant-out needs at least 2 participants, found {0}")]
    TooFewParticipants(usize),
    #[error("empty test set")]
    EmptyTestSet,
    #[error("fold leakage: {0}")]
    Leakage(String),
    #[error("unknown variant `{0}`")]
    UnknownVariant(String),
    #[error("probe: {0}")]
    Probe(String),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}
