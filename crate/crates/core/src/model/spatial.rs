//! Channel-sequence Bi-LSTM, per-region embedding, region attention and
//! re-expansion to node features.

use rand::Rng;

use super::params::{Bound, Linear, ParamStore};
use crate::autodiff::{Axis, Graph, GraphError, Matrix, NodeId};
use crate::montage::RegionMap;

/// Gate maps of one LSTM direction. Every weight is `d_h x (d_h + input)`
/// and acts on the stacked column `[h_prev; x]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmDirection {
    pub input_gate: Linear,
    pub forget_gate: Linear,
    pub output_gate: Linear,
    pub candidate: Linear,
}

impl LstmDirection {
    fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        hidden: usize,
        input: usize,
        rng: &mut R,
    ) -> Self {
        let mut gate = |g: &str| {
            Linear::register(
                store,
                &format!("{name}.{g}"),
                (hidden, hidden + input),
                (hidden, 1),
                rng,
            )
        };
        Self {
            input_gate: gate("input_gate"),
            forget_gate: gate("forget_gate"),
            output_gate: gate("output_gate"),
            candidate: gate("candidate"),
        }
    }

    fn gates(&self) -> [Linear; 4] {
        [self.input_gate, self.forget_gate, self.output_gate, self.candidate]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmParams {
    pub forward: LstmDirection,
    pub backward: LstmDirection,
    pub hidden: usize,
}

impl LstmParams {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        hidden: usize,
        input: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            forward: LstmDirection::register(store, "lstm.forward", hidden, input, rng),
            backward: LstmDirection::register(store, "lstm.backward", hidden, input, rng),
            hidden,
        }
    }
}

/// The four gates of a direction stacked into one `4 d_h x (d_h + input)`
/// map, so that one affine per step evaluates all of them.
struct FusedCell {
    weight: NodeId,
    bias: NodeId,
    hidden: usize,
}

impl FusedCell {
    fn new(g: &mut Graph, p: &LstmDirection, b: &Bound, hidden: usize) -> Result<Self, GraphError> {
        let gates = p.gates();
        let weights: Vec<NodeId> = gates.iter().map(|l| b[l.weight]).collect();
        let biases: Vec<NodeId> = gates.iter().map(|l| b[l.bias]).collect();
        Ok(Self {
            weight: g.concat_rows(&weights)?,
            bias: g.concat_rows(&biases)?,
            hidden,
        })
    }

    fn step(
        &self,
        g: &mut Graph,
        x: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> Result<(NodeId, NodeId), GraphError> {
        let d = self.hidden;
        let hx = g.concat_rows(&[h, x])?;
        let pre = g.affine(self.weight, hx, self.bias)?;
        let rows = |i: usize| (i * d..(i + 1) * d).collect::<Vec<_>>();
        let pre_in = g.select_rows(pre, &rows(0))?;
        let pre_forget = g.select_rows(pre, &rows(1))?;
        let pre_out = g.select_rows(pre, &rows(2))?;
        let pre_cand = g.select_rows(pre, &rows(3))?;
        let input = g.sigmoid(pre_in)?;
        let forget = g.sigmoid(pre_forget)?;
        let output = g.sigmoid(pre_out)?;
        let cand = g.tanh(pre_cand)?;
        let keep = g.mul(forget, c)?;
        let write = g.mul(input, cand)?;
        let c_new = g.add(keep, write)?;
        let squashed = g.tanh(c_new)?;
        let h_new = g.mul(output, squashed)?;
        Ok((h_new, c_new))
    }
}

/// One LSTM step. `x` is `input x B`, `h` and `c` are `d_h x B`, one column
/// per independent sequence.
pub fn lstm_cell(
    g: &mut Graph,
    p: &LstmDirection,
    b: &Bound,
    hidden: usize,
    x: NodeId,
    h: NodeId,
    c: NodeId,
) -> Result<(NodeId, NodeId), GraphError> {
    FusedCell::new(g, p, b, hidden)?.step(g, x, h, c)
}

/// Runs both directions over the channel axis of every sample at once.
/// Each input is `n x input`; each output is `n x 2 d_h` with row `i` equal
/// to `[h_forward_i; h_backward_i]`. Both directions start from zero state.
pub fn bilstm_sequence(
    g: &mut Graph,
    p: &LstmParams,
    b: &Bound,
    xs: &[NodeId],
) -> Result<Vec<NodeId>, GraphError> {
    let batch = xs.len();
    if batch == 0 {
        return Err(GraphError::NoInputs { op: "bilstm_sequence" });
    }
    let (n, _) = g.shape(xs[0]);
    let d = p.hidden;

    // Columns ordered channel-major: column i * batch + s is channel i of
    // sample s.
    let stacked = g.concat_rows(xs)?;
    let order: Vec<usize> = (0..n)
        .flat_map(|i| (0..batch).map(move |s| s * n + i))
        .collect();
    let reordered = g.select_rows(stacked, &order)?;
    let inputs = g.transpose(reordered)?;
    let step_inputs = (0..n)
        .map(|i| g.select_cols(inputs, &(i * batch..(i + 1) * batch).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>, _>>()?;

    let mut run = |dir: &LstmDirection, order: &mut dyn Iterator<Item = usize>| {
        let cell = FusedCell::new(g, dir, b, d)?;
        let mut h = g.constant(Matrix::zeros(d, batch));
        let mut c = h;
        let mut states = vec![h; n];
        for i in order {
            (h, c) = cell.step(g, step_inputs[i], h, c)?;
            states[i] = h;
        }
        g.concat_cols(&states)
    };
    let fwd = run(&p.forward, &mut (0..n))?;
    let bwd = run(&p.backward, &mut (0..n).rev())?;
    let both = g.concat_rows(&[fwd, bwd])?;

    (0..batch)
        .map(|s| {
            let cols: Vec<usize> = (0..n).map(|i| i * batch + s).collect();
            let sample = g.select_cols(both, &cols)?;
            g.transpose(sample)
        })
        .collect()
}

/// Region embedding, region attention and node expansion parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionParams {
    /// One `m x (|region| * 2 d_h)` map per region.
    pub embed: Vec<Linear>,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    /// `m x F` map applied to each node's region row.
    pub expand: Linear,
}

impl RegionParams {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        regions: &RegionMap,
        lstm_out: usize,
        region_dim: usize,
        node_dim: usize,
        rng: &mut R,
    ) -> Self {
        let embed = regions
            .regions
            .iter()
            .enumerate()
            .map(|(i, r)| {
                Linear::register(
                    store,
                    &format!("region.{i}.embed"),
                    (region_dim, r.channels.len() * lstm_out),
                    (region_dim, 1),
                    rng,
                )
            })
            .collect();
        let m = region_dim;
        Self {
            embed,
            query: Linear::register(store, "region_attention.query", (m, m), (1, m), rng),
            key: Linear::register(store, "region_attention.key", (m, m), (1, m), rng),
            value: Linear::register(store, "region_attention.value", (m, m), (1, m), rng),
            expand: Linear::register(store, "expand", (m, node_dim), (1, node_dim), rng),
        }
    }
}

/// `N x m`: row `r` embeds the concatenated rows of `s` at region `r`'s
/// channels, in map order.
pub fn partition_and_embed(
    g: &mut Graph,
    p: &RegionParams,
    b: &Bound,
    regions: &RegionMap,
    s: NodeId,
) -> Result<NodeId, GraphError> {
    let width = g.shape(s).1;
    let rows = regions
        .regions
        .iter()
        .zip(&p.embed)
        .map(|(region, lin)| {
            let picked = g.select_rows(s, &region.channels)?;
            let flat = g.reshape(picked, region.channels.len() * width, 1)?;
            let e = g.affine(b[lin.weight], flat, b[lin.bias])?;
            g.transpose(e)
        })
        .collect::<Result<Vec<_>, _>>()?;
    g.concat_rows(&rows)
}

/// Returns `(H, W_r)`; `W_r` rows are softmax-normalised over regions.
pub fn region_attention(
    g: &mut Graph,
    p: &RegionParams,
    b: &Bound,
    embedded: NodeId,
) -> Result<(NodeId, NodeId), GraphError> {
    let q = g.affine(embedded, b[p.query.weight], b[p.query.bias])?;
    let k = g.affine(embedded, b[p.key.weight], b[p.key.bias])?;
    let v = g.affine(embedded, b[p.value.weight], b[p.value.bias])?;
    let kt = g.transpose(k)?;
    let scores = g.matmul(q, kt)?;
    let weights = g.softmax(scores, Axis::Cols)?;
    Ok((g.matmul(weights, v)?, weights))
}

/// Column sums of `W_r`: the attention each region receives. Sums to `N`.
pub fn region_importance(weights: &Matrix) -> Vec<f64> {
    (0..weights.cols())
        .map(|c| (0..weights.rows()).map(|r| weights.get(r, c)).sum())
        .collect()
}

/// `n x F`: every channel takes its region's row, then the shared map.
pub fn expand_to_nodes(
    g: &mut Graph,
    p: &RegionParams,
    b: &Bound,
    region_of_channel: &[usize],
    h: NodeId,
) -> Result<NodeId, GraphError> {
    let rows = g.select_rows(h, region_of_channel)?;
    g.affine(rows, b[p.expand.weight], b[p.expand.bias])
}
