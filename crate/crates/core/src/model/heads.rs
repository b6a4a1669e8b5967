//! Emotion classifier, domain discriminator and their losses.

use rand::Rng;

use super::params::{Bound, Linear, ParamStore};
use crate::autodiff::{Axis, Graph, GraphError, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassifierParams {
    pub out: Linear,
}

impl ClassifierParams {
    pub fn register<R: Rng + ?Sized>(store: &mut ParamStore, features: usize, rng: &mut R) -> Self {
        Self {
            out: Linear::register(store, "classifier", (features, 2), (1, 2), rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscriminatorParams {
    pub hidden: Linear,
    pub out: Linear,
}

impl DiscriminatorParams {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        features: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            hidden: Linear::register(store, "discriminator.hidden", (features, hidden), (1, hidden), rng),
            out: Linear::register(store, "discriminator.out", (hidden, 2), (1, 2), rng),
        }
    }
}

/// Average over nodes: `n x F` to `1 x F`.
pub fn mean_pool(g: &mut Graph, z: NodeId) -> Result<NodeId, GraphError> {
    g.mean(z, Axis::Rows)
}

/// Class probabilities, one row per pooled sample.
pub fn classify(
    g: &mut Graph,
    p: &ClassifierParams,
    b: &Bound,
    pooled: NodeId,
) -> Result<NodeId, GraphError> {
    let logits = g.affine(pooled, b[p.out.weight], b[p.out.bias])?;
    g.softmax(logits, Axis::Cols)
}

/// Domain probabilities (column 0 source, column 1 target). With
/// `reverse = Some(lambda)` the input passes through gradient reversal.
pub fn discriminate(
    g: &mut Graph,
    p: &DiscriminatorParams,
    b: &Bound,
    pooled: NodeId,
    reverse: Option<f64>,
    slope: f64,
) -> Result<NodeId, GraphError> {
    let x = match reverse {
        Some(lambda) => g.grad_reverse(pooled, lambda)?,
        None => pooled,
    };
    let h = g.affine(x, b[p.hidden.weight], b[p.hidden.bias])?;
    let h = g.leaky_relu(h, slope)?;
    let logits = g.affine(h, b[p.out.weight], b[p.out.bias])?;
    g.softmax(logits, Axis::Cols)
}

/// Mean of `-ln p[i, y_i]` over the rows of `probs`.
pub fn cross_entropy(g: &mut Graph, probs: NodeId, labels: &[u8]) -> Result<NodeId, GraphError> {
    if labels.is_empty() {
        return Err(GraphError::NoInputs { op: "cross_entropy" });
    }
    let picks: Vec<(usize, usize)> = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| (i, usize::from(y)))
        .collect();
    let p = g.gather(probs, &picks)?;
    let logp = g.log(p)?;
    let mean = g.mean(logp, Axis::Rows)?;
    g.scale(mean, -1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zeroed(store: &mut ParamStore) {
        for i in 0..store.len() {
            let (r, c) = store.value(i).shape();
            store.set(i, Matrix::zeros(r, c));
        }
    }

    #[test]
    fn zero_heads_are_undecided() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let c = ClassifierParams::register(&mut store, 3, &mut rng);
        let d = DiscriminatorParams::register(&mut store, 3, 4, &mut rng);
        zeroed(&mut store);
        let mut g = Graph::new();
        let b = store.bind(&mut g);
        let pooled = g.constant(Matrix::uniform(2, 3, 1.0, &mut rng));
        let pc = classify(&mut g, &c, &b, pooled).unwrap();
        let pd = discriminate(&mut g, &d, &b, pooled, Some(0.3), 0.2).unwrap();
        assert_eq!(g.value(pc), &Matrix::filled(2, 2, 0.5));
        assert_eq!(g.value(pd), &Matrix::filled(2, 2, 0.5));
        let loss = cross_entropy(&mut g, pd, &[0, 1]).unwrap();
        assert!((g.value(loss).get(0, 0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn logit_hand_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let c = ClassifierParams::register(&mut store, 1, &mut rng);
        store.set(c.out.weight, Matrix::zeros(1, 2));
        store.set(c.out.bias, Matrix::row(&[3f64.ln(), 0.0]));
        let mut g = Graph::new();
        let b = store.bind(&mut g);
        let pooled = g.constant(Matrix::scalar(0.7));
        let p = classify(&mut g, &c, &b, pooled).unwrap();
        assert!(g.value(p).max_abs_diff(&Matrix::row(&[0.75, 0.25])) < 1e-15);
    }

    #[test]
    fn cross_entropy_values() {
        let mut g = Graph::new();
        let p = g.constant(Matrix::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]));
        let l = cross_entropy(&mut g, p, &[0, 1]).unwrap();
        let expected = -(0.9f64.ln() + 0.8f64.ln()) / 2.0;
        assert!((g.value(l).get(0, 0) - expected).abs() < 1e-15);
        assert!((expected - 0.16425).abs() < 1e-5);
        let certain = g.constant(Matrix::row(&[0.0, 1.0]));
        let l = cross_entropy(&mut g, certain, &[1]).unwrap();
        assert_eq!(g.value(l).get(0, 0), 0.0);
        assert!(cross_entropy(&mut g, p, &[]).is_err());
    }

    #[test]
    fn discriminator_forward_ignores_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let d = DiscriminatorParams::register(&mut store, 3, 4, &mut rng);
        let x = Matrix::uniform(2, 3, 1.0, &mut rng);
        let run = |lambda: Option<f64>| {
            let mut g = Graph::new();
            let b = store.bind(&mut g);
            let pooled = g.constant(x.clone());
            let p = discriminate(&mut g, &d, &b, pooled, lambda, 0.2).unwrap();
            g.value(p).clone()
        };
        assert_eq!(run(None), run(Some(0.0)));
        assert_eq!(run(None), run(Some(0.9)));
    }
}
