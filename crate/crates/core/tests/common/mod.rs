//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use ltsgat::eval::{fold_data, make_plan, Paradigm};
use ltsgat::signal::dataset::FeatureSet;
use ltsgat::signal::{extract_features, gen_synthetic, BandSpec, Dimension, FeatureSample, SynthConfig};

/// Synthetic recordings cut into 3 samples of `k` segments per trial.
pub fn synth_features(cfg: &SynthConfig, k: usize) -> FeatureSet {
    let bands = BandSpec::defaults();
    let trials = gen_synthetic(cfg).expect("synthetic data");
    let mut samples = Vec::new();
    for t in &trials {
        samples.extend(extract_features(t, &bands, k, 3, true).expect("features"));
    }
    FeatureSet {
        bands,
        channel_names: (0..cfg.n_channels).map(|i| format!("ch{i}")).collect(),
        samples,
    }
}

/// Per channel and band, the mean over segments.
pub fn segment_means(s: &FeatureSample) -> Vec<f64> {
    let mut out = Vec::with_capacity(s.n * s.bands);
    for c in 0..s.n {
        for b in 0..s.bands {
            out.push((0..s.k).map(|seg| s.get(c, seg, b)).sum::<f64>() / s.k as f64);
        }
    }
    out
}

/// L2-regularised logistic regression fitted by plain gradient descent.
pub struct Logistic {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Logistic {
    pub fn fit(x: &[Vec<f64>], y: &[u8], l2: f64, steps: usize, rate: f64) -> Self {
        let dim = x[0].len();
        let (mut w, mut b) = (vec![0.0; dim], 0.0);
        let n = x.len() as f64;
        for _ in 0..steps {
            let mut gw = vec![0.0; dim];
            let mut gb = 0.0;
            for (row, &label) in x.iter().zip(y) {
                let z: f64 = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
                let err = 1.0 / (1.0 + (-z).exp()) - f64::from(label);
                for (g, a) in gw.iter_mut().zip(row) {
                    *g += err * a / n;
                }
                gb += err / n;
            }
            for (wi, g) in w.iter_mut().zip(&gw) {
                *wi -= rate * (g + l2 * *wi);
            }
            b -= rate * gb;
        }
        Self { weights: w, bias: b }
    }

    pub fn predict(&self, row: &[f64]) -> u8 {
        let z: f64 = self.bias + row.iter().zip(&self.weights).map(|(a, c)| a * c).sum::<f64>();
        u8::from(z > 0.0)
    }
}

/// Participant-averaged accuracy of the logistic oracle under the same
/// folds and fold-wise standardization as the network.
pub fn oracle_accuracy(set: &FeatureSet, folds: usize, seed: u64, dim: Dimension) -> f64 {
    let plan = make_plan(&set.samples, Paradigm::Dependent, folds, seed).unwrap();
    let mut per: std::collections::BTreeMap<u32, Vec<f64>> = Default::default();
    for fold in &plan.folds {
        let data = fold_data(&set.samples, fold).unwrap();
        let x: Vec<Vec<f64>> = data.train.iter().map(segment_means).collect();
        let y: Vec<u8> = data.train.iter().map(|s| s.label(dim)).collect();
        let model = Logistic::fit(&x, &y, 1e-2, 300, 0.1);
        let hits = data
            .test
            .iter()
            .filter(|s| model.predict(&segment_means(s)) == s.label(dim))
            .count();
        per.entry(fold.participant)
            .or_default()
            .push(hits as f64 / data.test.len() as f64);
    }
    per.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).sum::<f64>() / per.len() as f64
}

/// A small configuration for shape-level checks: 4 channels in 3
/// regions, 3 segments, 2 bands.
pub fn tiny_config() -> ltsgat::config::TrainConfig {
    let mut cfg = ltsgat::config::TrainConfig::default();
    cfg.n = 4;
    cfg.k = 3;
    cfg.regions = 3;
    cfg.lstm_hidden = 2;
    cfg.region_dim = Some(3);
    cfg.node_dim = Some(3);
    cfg.gat_layers = 2;
    cfg.gat_hidden = 3;
    cfg.heads = 2;
    cfg.disc_hidden = 4;
    cfg.bands = vec!["theta".into(), "alpha".into()];
    cfg
}

/// A sample with entries uniform in `[-scale, scale]`.
pub fn random_sample<R: rand::Rng>(
    n: usize,
    k: usize,
    bands: usize,
    scale: f64,
    label: u8,
    rng: &mut R,
) -> FeatureSample {
    FeatureSample {
        n,
        k,
        bands,
        x: (0..n * k * bands).map(|_| rng.gen_range(-scale..=scale)).collect(),
        valence: label,
        arousal: label,
        participant: 0,
        trial: 0,
        sample_index: 0,
    }
}

/// Gradient of every bound parameter, zeros where none flowed.
pub fn grads(g: &ltsgat::autodiff::Graph, b: &ltsgat::model::Bound) -> Vec<ltsgat::autodiff::Matrix> {
    b.ids()
        .iter()
        .map(|&id| {
            g.grad(id).cloned().unwrap_or_else(|| {
                let (r, c) = g.shape(id);
                ltsgat::autodiff::Matrix::zeros(r, c)
            })
        })
        .collect()
}
