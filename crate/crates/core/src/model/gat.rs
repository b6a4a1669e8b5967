//! Multi-head graph attention with averaged heads.

use rand::Rng;

use super::params::{Bound, Init, ParamStore};
use super::topology::Topology;
use crate::autodiff::{Axis, Graph, GraphError, Matrix, NodeId};

/// One attention head. `proj` is stored as `F_in x F_out` so that node rows
/// multiply it directly (`Z proj` has rows `W_s z_i`); `attn` is the
/// `2 F_out` scoring vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatHead {
    pub proj: usize,
    pub attn: usize,
    pub out_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatLayerParams {
    pub heads: Vec<GatHead>,
}

impl GatLayerParams {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        layer: usize,
        in_dim: usize,
        out_dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Self {
        let heads = (0..heads)
            .map(|h| GatHead {
                proj: store.register(
                    format!("gat.{layer}.head.{h}.proj"),
                    in_dim,
                    out_dim,
                    Init::Glorot,
                    rng,
                ),
                attn: store.register(
                    format!("gat.{layer}.head.{h}.attn"),
                    2 * out_dim,
                    1,
                    Init::Glorot,
                    rng,
                ),
                out_dim,
            })
            .collect();
        Self { heads }
    }
}

/// Attention matrix of one head (row `i` holds `a_i.`, zero outside the
/// neighbourhood) and the projected features.
pub fn gat_coeffs(
    g: &mut Graph,
    head: &GatHead,
    b: &Bound,
    z: NodeId,
    topo: &Topology,
    slope: f64,
) -> Result<(NodeId, NodeId), GraphError> {
    let n = g.shape(z).0;
    let f = head.out_dim;
    let wz = g.matmul(z, b[head.proj])?;
    // [a1 a2] as an F x 2 matrix: column 0 scores the centre node, column 1
    // the neighbour.
    let pair = g.reshape(b[head.attn], 2, f)?;
    let pair = g.transpose(pair)?;
    let parts = g.matmul(wz, pair)?;
    let mut first = Matrix::zeros(2, n);
    let mut second = Matrix::zeros(2, n);
    for j in 0..n {
        first.set(0, j, 1.0);
        second.set(1, j, 1.0);
    }
    let first = g.constant(first);
    let second = g.constant(second);
    let centre = g.matmul(parts, first)?;
    let neighbour = g.matmul(parts, second)?;
    let neighbour = g.transpose(neighbour)?;
    let raw = g.add(centre, neighbour)?;
    let scores = g.leaky_relu(raw, slope)?;
    let attention = g.masked_softmax(scores, Axis::Cols, topo.mask())?;
    Ok((attention, wz))
}

/// `LeakyReLU(mean over heads of A_h (Z W_h))` and the per-head attention.
pub fn gat_layer(
    g: &mut Graph,
    p: &GatLayerParams,
    b: &Bound,
    z: NodeId,
    topo: &Topology,
    slope: f64,
) -> Result<(NodeId, Vec<NodeId>), GraphError> {
    if p.heads.is_empty() {
        return Err(GraphError::NoInputs { op: "gat_layer" });
    }
    let mut total = None;
    let mut attn = Vec::with_capacity(p.heads.len());
    for head in &p.heads {
        let (a, wz) = gat_coeffs(g, head, b, z, topo, slope)?;
        let mixed = g.matmul(a, wz)?;
        total = Some(match total {
            None => mixed,
            Some(acc) => g.add(acc, mixed)?,
        });
        attn.push(a);
    }
    let mean = g.scale(total.expect("at least one head"), 1.0 / p.heads.len() as f64)?;
    Ok((g.leaky_relu(mean, slope)?, attn))
}

/// Layers applied in order; returns the final features and the attention
/// of every layer and head.
pub fn gat_stack(
    g: &mut Graph,
    layers: &[GatLayerParams],
    b: &Bound,
    z: NodeId,
    topo: &Topology,
    slope: f64,
) -> Result<(NodeId, Vec<Vec<NodeId>>), GraphError> {
    let mut z = z;
    let mut attn = Vec::with_capacity(layers.len());
    for layer in layers {
        let (next, a) = gat_layer(g, layer, b, z, topo, slope)?;
        z = next;
        attn.push(a);
    }
    Ok((z, attn))
}
