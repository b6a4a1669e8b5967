//! The network: temporal attention, spatial encoder, graph attention stack
//! and the two heads.

pub mod gat;
pub mod heads;
mod network;
pub mod params;
pub mod spatial;
pub mod temporal;
mod topology;

use thiserror::Error;

use crate::autodiff::GraphError;
use crate::montage::MontageError;

pub use network::{
    AttentionValues, DomainPath, Forward, Layout, Losses, Model, ModelConfig, Trace,
};
pub use params::{Bound, Init, Linear, ParamInfo, ParamStore};
pub use topology::{Topology, TopologyConfig};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{module}: {source}")]
    Graph {
        module: &'static str,
        #[source]
        source: GraphError,
    },
    #[error("input is {actual:?} (channels, segments, bands), model expects {expected:?}")]
    InputShape {
        expected: (usize, usize, usize),
        actual: (usize, usize, usize),
    },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Montage(#[from] MontageError),
}
