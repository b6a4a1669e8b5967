//! Segment-level attention applied to each frequency band of a sample.

use rand::Rng;

use super::params::{Bound, Linear, ParamStore};
use crate::autodiff::{Axis, Graph, GraphError, Matrix, NodeId};

/// Query/key/value maps over the channel axis. Each weight `M` is stored in
/// the orientation it is applied in, `Q = M X + B` for an `n x k` band slice
/// `X`, so it equals the transpose of the usual `W_Q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemporalParams {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
}

impl TemporalParams {
    pub fn register<R: Rng + ?Sized>(store: &mut ParamStore, n: usize, k: usize, rng: &mut R) -> Self {
        Self {
            query: Linear::register(store, "temporal.query", (n, n), (n, k), rng),
            key: Linear::register(store, "temporal.key", (n, n), (n, k), rng),
            value: Linear::register(store, "temporal.value", (n, n), (n, k), rng),
        }
    }
}

/// `(Q, K, V)` for one `n x k` band slice.
pub fn temporal_qkv(
    g: &mut Graph,
    p: &TemporalParams,
    b: &Bound,
    x: NodeId,
) -> Result<(NodeId, NodeId, NodeId), GraphError> {
    let q = g.affine(b[p.query.weight], x, b[p.query.bias])?;
    let k = g.affine(b[p.key.weight], x, b[p.key.bias])?;
    let v = g.affine(b[p.value.weight], x, b[p.value.bias])?;
    Ok((q, k, v))
}

/// `k x k` weights: scores `Kᵀ Q`, normalised down each column.
pub fn temporal_weights(g: &mut Graph, q: NodeId, k: NodeId) -> Result<NodeId, GraphError> {
    let kt = g.transpose(k)?;
    let scores = g.matmul(kt, q)?;
    g.softmax(scores, Axis::Rows)
}

/// `V W_A`: every output column is a convex mix of the columns of `V`.
pub fn temporal_transform(g: &mut Graph, v: NodeId, weights: NodeId) -> Result<NodeId, GraphError> {
    g.matmul(v, weights)
}

/// Row sums of a column-stochastic weight matrix: how much each segment
/// contributes over all output positions. Sums to `k`.
pub fn temporal_importance(weights: &Matrix) -> Vec<f64> {
    (0..weights.rows())
        .map(|i| weights.row_slice(i).iter().sum())
        .collect()
}

/// Runs the attention once per band with shared parameters. `x` is the
/// `n x (k * bands)` band-major slice matrix; returns the transformed matrix
/// of the same shape and the per-band weight nodes.
pub fn temporal_attention(
    g: &mut Graph,
    p: &TemporalParams,
    b: &Bound,
    x: NodeId,
    k: usize,
    bands: usize,
) -> Result<(NodeId, Vec<NodeId>), GraphError> {
    let mut outputs = Vec::with_capacity(bands);
    let mut weights = Vec::with_capacity(bands);
    for band in 0..bands {
        let cols: Vec<usize> = (band * k..(band + 1) * k).collect();
        let slice = g.select_cols(x, &cols)?;
        let (q, kk, v) = temporal_qkv(g, p, b, slice)?;
        let w = temporal_weights(g, q, kk)?;
        outputs.push(temporal_transform(g, v, w)?);
        weights.push(w);
    }
    Ok((g.concat_cols(&outputs)?, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize, k: usize, seed: u64) -> (ParamStore, TemporalParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let p = TemporalParams::register(&mut store, n, k, &mut rng);
        (store, p)
    }

    #[test]
    fn identity_weights_pass_input_through() {
        let (mut store, p) = setup(3, 2, 0);
        store.set(p.query.weight, Matrix::identity(3));
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let mut g = Graph::new();
        let b = store.bind(&mut g);
        let xi = g.constant(x.clone());
        let (q, _, _) = temporal_qkv(&mut g, &p, &b, xi).unwrap();
        assert_eq!(g.value(q), &x);

        store.set(p.query.bias, Matrix::filled(3, 2, 0.25));
        let mut g2 = Graph::new();
        let b2 = store.bind(&mut g2);
        let z = g2.constant(Matrix::zeros(3, 2));
        let (q, _, _) = temporal_qkv(&mut g2, &p, &b2, z).unwrap();
        assert_eq!(g2.value(q), &Matrix::filled(3, 2, 0.25));
    }

    #[test]
    fn zero_keys_give_uniform_weights() {
        let mut g = Graph::new();
        let q = g.constant(Matrix::from_rows(&vec![vec![1.0, -2.0, 0.3]; 4]));
        let k = g.constant(Matrix::zeros(4, 3));
        let w = temporal_weights(&mut g, q, k).unwrap();
        assert!(g.value(w).data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn two_segment_hand_case() {
        // With K = I the scores are Q itself.
        let l3 = 3f64.ln();
        let mut g = Graph::new();
        let q = g.constant(Matrix::from_rows(&[vec![0.0, 0.0], vec![l3, l3]]));
        let k = g.constant(Matrix::identity(2));
        let w = temporal_weights(&mut g, q, k).unwrap();
        let expected = Matrix::from_rows(&[vec![0.25, 0.25], vec![0.75, 0.75]]);
        assert!(g.value(w).max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn random_case_matches_direct_formula() {
        let (store, p) = setup(4, 3, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Matrix::uniform(4, 3, 1.0, &mut rng);
        let mut g = Graph::new();
        let b = store.bind(&mut g);
        let xi = g.constant(x.clone());
        let (q, k, v) = temporal_qkv(&mut g, &p, &b, xi).unwrap();
        let w = temporal_weights(&mut g, q, k).unwrap();
        let out = temporal_transform(&mut g, v, w).unwrap();

        // Scalar loops, independent of the matrix helpers.
        let aff = |wi: usize, bi: usize| {
            let (wm, bm) = (store.value(wi), store.value(bi));
            let mut r = vec![vec![0.0; 3]; 4];
            for i in 0..4 {
                for c in 0..3 {
                    r[i][c] = bm.get(i, c) + (0..4).map(|j| wm.get(i, j) * x.get(j, c)).sum::<f64>();
                }
            }
            r
        };
        let (qq, kk, vv) = (
            aff(p.query.weight, p.query.bias),
            aff(p.key.weight, p.key.bias),
            aff(p.value.weight, p.value.bias),
        );
        for c in 0..3 {
            let e: Vec<f64> = (0..3)
                .map(|i| (0..4).map(|r| kk[r][i] * qq[r][c]).sum::<f64>())
                .collect();
            let total: f64 = e.iter().map(|v| v.exp()).sum();
            for i in 0..3 {
                assert!((g.value(w).get(i, c) - e[i].exp() / total).abs() < 1e-12);
            }
            for r in 0..4 {
                let mix: f64 = (0..3).map(|i| vv[r][i] * e[i].exp() / total).sum();
                assert!((g.value(out).get(r, c) - mix).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transform_special_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = Matrix::uniform(4, 3, 1.0, &mut rng);
        let mut g = Graph::new();
        let vi = g.constant(v.clone());
        let id = g.constant(Matrix::identity(3));
        let out = temporal_transform(&mut g, vi, id).unwrap();
        assert_eq!(g.value(out), &v);
        let uni = g.constant(Matrix::filled(3, 3, 1.0 / 3.0));
        let out = temporal_transform(&mut g, vi, uni).unwrap();
        for r in 0..4 {
            let mean = v.row_slice(r).iter().sum::<f64>() / 3.0;
            for c in 0..3 {
                assert!((g.value(out).get(r, c) - mean).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn importance_limits() {
        assert_eq!(temporal_importance(&Matrix::filled(4, 4, 0.25)), vec![1.0; 4]);
        let mut dominant = Matrix::zeros(3, 3);
        for c in 0..3 {
            dominant.set(1, c, 1.0);
        }
        assert_eq!(temporal_importance(&dominant), vec![0.0, 3.0, 0.0]);
    }

    #[test]
    fn bands_share_parameters() {
        let (store, p) = setup(3, 2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let band = Matrix::uniform(3, 2, 1.0, &mut rng);
        let mut both = Matrix::zeros(3, 4);
        for r in 0..3 {
            for c in 0..2 {
                both.set(r, c, band.get(r, c));
                both.set(r, c + 2, band.get(r, c));
            }
        }
        let mut g = Graph::new();
        let b = store.bind(&mut g);
        let x = g.constant(both);
        let (out, w) = temporal_attention(&mut g, &p, &b, x, 2, 2).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(g.value(w[0]), g.value(w[1]));
        let o = g.value(out);
        for r in 0..3 {
            assert_eq!(o.get(r, 0), o.get(r, 2));
            assert_eq!(o.get(r, 1), o.get(r, 3));
        }
    }
}
