use ltsgat::config::ConfigError;
use ltsgat::eval::EvalError;
use ltsgat::signal::SignalError;
use ltsgat::train::TrainError;
use thiserror::Error;

/// Exit status for malformed invocations.
pub const EXIT_USAGE: u8 = 64;
/// Exit status for configuration errors.
pub const EXIT_CONFIG: u8 = 78;
/// Exit status when one or more folds failed.
pub const EXIT_FOLD_FAILURE: u8 = 2;
/// Exit status for unreadable or malformed input data.
pub const EXIT_DATA: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{failed} of {total} folds failed")]
    FoldFailures { failed: usize, total: usize },
    #[error("gradient check failed: {0}")]
    GradCheck(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn signal_code(e: &SignalError) -> u8 {
    match e {
        SignalError::InvalidSynth(_) | SignalError::UnknownBand(_) | SignalError::InvalidBand { .. } => {
            EXIT_CONFIG
        }
        _ => EXIT_DATA,
    }
}

fn train_code(e: &TrainError) -> u8 {
    match e {
        TrainError::Config(_) => EXIT_CONFIG,
        TrainError::Signal(s) => signal_code(s),
        TrainError::Checkpoint(_) | TrainError::Io { .. } => EXIT_DATA,
        _ => 1,
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Signal(e) => signal_code(e),
            CliError::Train(e) => train_code(e),
            CliError::Eval(e) => match e {
                EvalError::Config(_) => EXIT_CONFIG,
                EvalError::UnknownVariant(_) => EXIT_USAGE,
                EvalError::Signal(s) => signal_code(s),
                EvalError::Train(t) => train_code(t),
                EvalError::TooFewTrials { .. } | EvalError::TooFewParticipants(_) => EXIT_DATA,
                _ => 1,
            },
            CliError::FoldFailures { .. } => EXIT_FOLD_FAILURE,
            CliError::GradCheck(_) | CliError::Io { .. } => 1,
        }
    }
}
