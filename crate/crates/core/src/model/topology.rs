use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::montage::Electrodes;

/// How node neighbourhoods are formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum TopologyConfig {
    /// Every node attends to every node.
    Full,
    /// Nodes within `threshold` (unit-sphere chord length) are neighbours.
    /// `coords` overrides the bundled 32-electrode positions.
    Distance {
        threshold: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coords: Option<Vec<[f64; 3]>>,
    },
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig::Full
    }
}

/// Symmetric neighbourhood structure with self-loops, stored as a row-major
/// `n x n` mask (`mask[i * n + j]` is true when `j` is a neighbour of `i`).
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    n: usize,
    mask: Arc<Vec<bool>>,
}

impl Topology {
    pub fn full(n: usize) -> Self {
        Self {
            n,
            mask: Arc::new(vec![true; n * n]),
        }
    }

    /// Builds a topology from undirected edges. Self-loops are always added
    /// and every edge is symmetrised.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut mask = vec![false; n * n];
        for i in 0..n {
            mask[i * n + i] = true;
        }
        for &(a, b) in edges {
            mask[a * n + b] = true;
            mask[b * n + a] = true;
        }
        Self {
            n,
            mask: Arc::new(mask),
        }
    }

    pub fn distance(electrodes: &Electrodes, threshold: f64) -> Self {
        Self::from_coords(&electrodes.coords, threshold)
    }

    pub fn from_coords(coords: &[[f64; 3]], threshold: f64) -> Self {
        let n = coords.len();
        let dist = |a: [f64; 3], b: [f64; 3]| {
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
        };
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if dist(coords[a], coords[b]) <= threshold {
                    edges.push((a, b));
                }
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mask(&self) -> Arc<Vec<bool>> {
        Arc::clone(&self.mask)
    }

    pub fn neighbours(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.mask[i * self.n + j]).collect()
    }

    /// Applies a node permutation: node `perm[i]` of the result is node `i`
    /// of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut mask = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                mask[perm[i] * n + perm[j]] = self.mask[i * n + j];
            }
        }
        Self {
            n,
            mask: Arc::new(mask),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges_are_symmetric_with_self_loops() {
        let t = Topology::from_edges(3, &[(0, 2)]);
        assert_eq!(t.neighbours(0), vec![0, 2]);
        assert_eq!(t.neighbours(1), vec![1]);
        assert_eq!(t.neighbours(2), vec![0, 2]);
    }

    #[test]
    fn distance_topology_is_local() {
        let e = Electrodes::default_32();
        let t = Topology::distance(&e, 0.7);
        let idx = |n: &str| e.channels.iter().position(|c| c == n).unwrap();
        let fp1 = t.neighbours(idx("Fp1"));
        assert!(fp1.contains(&idx("AF3")));
        assert!(!fp1.contains(&idx("O2")));
        for i in 0..32 {
            for j in t.neighbours(i) {
                assert!(t.neighbours(j).contains(&i));
            }
        }
    }

    #[test]
    fn config_json_forms() {
        let full: TopologyConfig = serde_json::from_str(r#"{"mode":"full"}"#).unwrap();
        assert_eq!(full, TopologyConfig::Full);
        let d: TopologyConfig =
            serde_json::from_str(r#"{"mode":"distance","threshold":0.5}"#).unwrap();
        assert_eq!(
            d,
            TopologyConfig::Distance {
                threshold: 0.5,
                coords: None
            }
        );
    }
}
