//! Raw signal preprocessing, differential-entropy features and the
//! synthetic recording generator.

pub mod dataset;
mod features;
mod filter;
mod synth;

use thiserror::Error;

pub use features::{
    bandpass, binarize_rating, differential_entropy, downsample, extract_features,
    segment_and_split, standardize, BandSpec, Dimension, FeatureSample, RawTrial, Standardizer,
    FILTER_ORDER, VARIANCE_FLOOR,
};
pub use filter::{butterworth, Biquad, FilterKind, Sos};
pub use synth::{gen_synthetic, SynthConfig};

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("cutoff {cutoff} Hz must lie strictly between 0 and the Nyquist frequency {nyquist} Hz")]
    CutoffOutOfRange { cutoff: f64, nyquist: f64 },
    #[error("invalid band: low {low} Hz must be positive and below high {high} Hz")]
    InvalidBand { low: f64, high: f64 },
    #[error("unknown band `{0}` (expected theta, alpha, beta or gamma)")]
    UnknownBand(String),
    #[error("target rate {target} Hz must be positive and below the source rate {source_rate} Hz")]
    TargetRateNotBelowSource { target: f64, source_rate: f64 },
    #[error("sampling rate must be positive, got {0}")]
    InvalidRate(f64),
    #[error("channel {channel} has {actual} points, expected {expected}")]
    RaggedChannels {
        channel: usize,
        expected: usize,
        actual: usize,
    },
    #[error("trial too short: need at least {required} points, got {actual}")]
    TrialTooShort { required: usize, actual: usize },
    #[error("rating {0} outside [1, 9]")]
    RatingOutOfRange(f64),
    #[error("need at least {required} samples to standardize, got {actual}")]
    TooFewSamples { required: usize, actual: usize },
    #[error("participant {participant} has {actual} samples, at least {required} are needed to standardize")]
    TooFewParticipantSamples {
        participant: u32,
        required: usize,
        actual: usize,
    },
    #[error("invalid synthetic configuration: {0}")]
    InvalidSynth(String),
    #[error("data format: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}
