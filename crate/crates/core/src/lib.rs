//! EEG emotion recognition with temporal attention, regional spatial
//! encoding, graph attention and domain-adversarial training.

pub mod autodiff;
pub mod config;
pub mod eval;
pub mod model;
pub mod montage;
pub mod signal;
pub mod train;
