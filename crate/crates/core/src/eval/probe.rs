use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::EvalError;
use crate::autodiff::{Graph, Matrix};
use crate::model::heads::{cross_entropy, discriminate, DiscriminatorParams};
use crate::model::ParamStore;
use crate::train::Adam;

/// Settings of the post-hoc domain classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Share of each domain held out for scoring.
    pub test_fraction: f64,
    pub leaky_slope: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 300,
            learning_rate: 0.01,
            test_fraction: 0.3,
            leaky_slope: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeResult {
    /// Held-out domain accuracy; 0.5 is chance.
    pub accuracy: f64,
    pub train_accuracy: f64,
    pub train_size: usize,
    pub test_size: usize,
}

fn to_matrix(rows: &[&Vec<f64>], mean: &[f64], std: &[f64]) -> Matrix {
    let cols = mean.len();
    let mut data = Vec::with_capacity(rows.len() * cols);
    for r in rows {
        for c in 0..cols {
            data.push(if std[c] == 0.0 { 0.0 } else { (r[c] - mean[c]) / std[c] });
        }
    }
    Matrix::from_vec(rows.len(), cols, data)
}

fn hits(probs: &Matrix, labels: &[u8]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|(i, &y)| u8::from(probs.get(*i, 1) > probs.get(*i, 0)) == y)
        .count()
}

/// Trains a fresh discriminator-shaped classifier to tell `source` rows
/// (label 0) from `target` rows (label 1) and scores it on a held-out
/// split. Both domains are subsampled to the same size so chance is 0.5.
/// Inputs are z-scored with training-split statistics.
pub fn domain_probe(
    source: &[Vec<f64>],
    target: &[Vec<f64>],
    cfg: &ProbeConfig,
) -> Result<ProbeResult, EvalError> {
    let per_domain = source.len().min(target.len());
    let test_each = ((per_domain as f64 * cfg.test_fraction).round() as usize).max(1);
    if per_domain < test_each + 2 {
        return Err(EvalError::Probe(format!(
            "need at least {} rows per domain, have {per_domain}",
            test_each + 2
        )));
    }
    let dim = source[0].len();
    if source.iter().chain(target).any(|r| r.len() != dim) {
        return Err(EvalError::Probe("feature rows differ in length".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pick = |rows: &[Vec<f64>]| {
        let mut idx: Vec<usize> = (0..rows.len()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(per_domain);
        idx
    };
    let (src_idx, tgt_idx) = (pick(source), pick(target));
    let mut train_rows: Vec<&Vec<f64>> = Vec::new();
    let mut test_rows: Vec<&Vec<f64>> = Vec::new();
    let (mut train_labels, mut test_labels) = (Vec::new(), Vec::new());
    for (rows, idx, label) in [(source, &src_idx, 0u8), (target, &tgt_idx, 1u8)] {
        for (j, &i) in idx.iter().enumerate() {
            if j < test_each {
                test_rows.push(&rows[i]);
                test_labels.push(label);
            } else {
                train_rows.push(&rows[i]);
                train_labels.push(label);
            }
        }
    }

    let count = train_rows.len() as f64;
    let mean: Vec<f64> = (0..dim)
        .map(|c| train_rows.iter().map(|r| r[c]).sum::<f64>() / count)
        .collect();
    let std: Vec<f64> = (0..dim)
        .map(|c| {
            let v = train_rows.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / count;
            if v <= 1e-24 * (1.0 + mean[c] * mean[c]) {
                0.0
            } else {
                v.sqrt()
            }
        })
        .collect();
    let x_train = to_matrix(&train_rows, &mean, &std);
    let x_test = to_matrix(&test_rows, &mean, &std);

    let mut store = ParamStore::new();
    let params = DiscriminatorParams::register(&mut store, dim, cfg.hidden, &mut rng);
    let mut adam = Adam::new(&store, cfg.learning_rate);
    let mut train_hits = 0;
    for _ in 0..cfg.epochs {
        let mut g = Graph::new();
        let b = store.bind(&mut g);
        let x = g.constant(x_train.clone());
        let probs = discriminate(&mut g, &params, &b, x, None, cfg.leaky_slope)
            .map_err(|e| EvalError::Probe(e.to_string()))?;
        train_hits = hits(g.value(probs), &train_labels);
        let loss = cross_entropy(&mut g, probs, &train_labels).map_err(|e| EvalError::Probe(e.to_string()))?;
        g.backward(loss).map_err(|e| EvalError::Probe(e.to_string()))?;
        let grads: Vec<_> = b.ids().iter().map(|&id| g.grad(id).cloned()).collect();
        adam.update(&mut store, &grads)?;
    }

    let mut g = Graph::new();
    let b = store.bind(&mut g);
    let x = g.constant(x_test);
    let probs = discriminate(&mut g, &params, &b, x, None, cfg.leaky_slope)
        .map_err(|e| EvalError::Probe(e.to_string()))?;
    Ok(ProbeResult {
        accuracy: hits(g.value(probs), &test_labels) as f64 / test_labels.len() as f64,
        train_accuracy: train_hits as f64 / train_labels.len() as f64,
        train_size: train_labels.len(),
        test_size: test_labels.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn cloud(n: usize, dim: usize, offset: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| offset + rng.sample::<f64, _>(StandardNormal)).collect())
            .collect()
    }

    #[test]
    fn separable_domains_are_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = cloud(60, 5, 0.0, &mut rng);
        let b = cloud(40, 5, 3.0, &mut rng);
        let r = domain_probe(&a, &b, &ProbeConfig::default()).unwrap();
        assert_eq!((r.train_size, r.test_size), (56, 24));
        assert!(r.accuracy > 0.95, "{r:?}");
    }

    #[test]
    fn identical_distributions_stay_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = cloud(200, 4, 0.0, &mut rng);
        let b = cloud(200, 4, 0.0, &mut rng);
        let cfg = ProbeConfig {
            epochs: 100,
            ..ProbeConfig::default()
        };
        let r = domain_probe(&a, &b, &cfg).unwrap();
        assert!(r.accuracy < 0.65, "{r:?}");
    }

    #[test]
    fn too_few_rows() {
        let a = vec![vec![0.0]; 2];
        assert!(domain_probe(&a, &a, &ProbeConfig::default()).is_err());
    }
}
