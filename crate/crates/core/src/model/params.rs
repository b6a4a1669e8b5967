use std::ops::Index;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Matrix, NodeId};

/// Name and shape of one registered parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// Ordered registry of learnable matrices. Registration order is the
/// iteration order everywhere (binding, optimizer state, checkpoints).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    info: Vec<ParamInfo>,
    values: Vec<Matrix>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Uniform in `+-sqrt(6 / (rows + cols))`.
    Glorot,
    Zeros,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter and returns its index.
    ///
    /// Panics on a duplicate name; names are fixed by the architecture.
    pub fn register<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        init: Init,
        rng: &mut R,
    ) -> usize {
        let name = name.into();
        assert!(
            !self.info.iter().any(|p| p.name == name),
            "duplicate parameter {name}"
        );
        let value = match init {
            Init::Glorot => {
                let bound = (6.0 / (rows + cols) as f64).sqrt();
                Matrix::uniform(rows, cols, bound, rng)
            }
            Init::Zeros => Matrix::zeros(rows, cols),
        };
        self.info.push(ParamInfo { name, rows, cols });
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn info(&self) -> &[ParamInfo] {
        &self.info
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    pub fn value(&self, idx: usize) -> &Matrix {
        &self.values[idx]
    }

    /// Replaces a value; the shape must match the registered one.
    pub fn set(&mut self, idx: usize, value: Matrix) {
        let info = &self.info[idx];
        assert_eq!(
            value.shape(),
            (info.rows, info.cols),
            "shape of {}",
            info.name
        );
        self.values[idx] = value;
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.info.iter().position(|p| p.name == name)
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.info.iter().map(|p| p.rows * p.cols).sum()
    }

    /// Adds every parameter to `g` as a trainable leaf.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        Bound {
            ids: self.values.iter().map(|v| g.param(v.clone())).collect(),
        }
    }

    /// Concatenation of all values in registry order.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flat_map(|m| m.data().iter().copied()).collect()
    }

    /// Inverse of [`flatten`](Self::flatten). Returns `false` if the length
    /// does not match the registry.
    pub fn load_flat(&mut self, data: &[f64]) -> bool {
        if data.len() != self.scalar_count() {
            return false;
        }
        let mut offset = 0;
        for (info, value) in self.info.iter().zip(self.values.iter_mut()) {
            let len = info.rows * info.cols;
            *value = Matrix::from_vec(info.rows, info.cols, data[offset..offset + len].to_vec());
            offset += len;
        }
        true
    }
}

/// Graph nodes of a bound [`ParamStore`], indexed like the store.
#[derive(Debug, Clone)]
pub struct Bound {
    ids: Vec<NodeId>,
}

impl Bound {
    /// Wraps nodes already holding the store's values, in registry order.
    pub fn from_ids(ids: Vec<NodeId>) -> Self {
        Self { ids }
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }
}

impl Index<usize> for Bound {
    type Output = NodeId;
    fn index(&self, idx: usize) -> &NodeId {
        &self.ids[idx]
    }
}

/// Weight and bias indices of one affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: usize,
    pub bias: usize,
}

impl Linear {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        weight: (usize, usize),
        bias: (usize, usize),
        rng: &mut R,
    ) -> Self {
        Self {
            weight: store.register(format!("{name}.weight"), weight.0, weight.1, Init::Glorot, rng),
            bias: store.register(format!("{name}.bias"), bias.0, bias.1, Init::Zeros, rng),
        }
    }
}
