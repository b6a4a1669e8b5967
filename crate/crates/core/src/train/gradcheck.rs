//! End-to-end finite-difference check of the full network loss.

use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check, GradCheckReport, Graph, GraphError, NodeId};
use crate::config::TrainConfig;
use crate::model::{Bound, DomainPath, Model, ModelError};
use crate::signal::FeatureSample;

use super::TrainError;

/// A whole-model gradient check with the analytic gradient kept alongside,
/// so failures can be told apart from rounding-level noise.
#[derive(Debug, Clone)]
pub struct ModelGradCheck {
    pub report: GradCheckReport,
    /// Analytic gradient, flattened in parameter order.
    pub analytic: Vec<f64>,
}

impl ModelGradCheck {
    /// Entries whose relative error reaches `tol`, and the largest analytic
    /// gradient magnitude among them.
    pub fn offenders(&self, tol: f64) -> (usize, f64) {
        self.report
            .errors
            .iter()
            .zip(&self.analytic)
            .filter(|(e, _)| **e >= tol)
            .fold((0, 0.0), |(n, m), (_, a)| (n + 1, f64::max(m, a.abs())))
    }
}

/// Checks d(L_c + L_d)/dθ over every parameter. The domain branch is
/// wired without reversal, which would otherwise break the match between the
/// forward function and its gradient on purpose.
pub fn check_model(
    model: &Model,
    source: &[&FeatureSample],
    labels: &[u8],
    target: &[&FeatureSample],
    tol: f64,
) -> Result<ModelGradCheck, TrainError> {
    // A model error other than a graph error (bad sample shapes) cannot
    // travel through the builder's error type, so it is parked here.
    let rejected: RefCell<Option<ModelError>> = RefCell::new(None);
    let build = |g: &mut Graph, ids: &[NodeId]| {
        let b = Bound::from_ids(ids.to_vec());
        match model.losses(g, &b, source, labels, target, DomainPath::Direct) {
            Ok(losses) => Ok(losses.total),
            Err(ModelError::Graph { source, .. }) => Err(source),
            Err(other) => {
                *rejected.borrow_mut() = Some(other);
                Err(GraphError::NoInputs { op: "model" })
            }
        }
    };
    let report = grad_check("model", model.params.values(), tol, build);
    if let Some(e) = rejected.take() {
        return Err(e.into());
    }
    let report = report?;

    let mut g = Graph::new();
    let ids: Vec<NodeId> = model.params.values().iter().map(|m| g.param(m.clone())).collect();
    let out = build(&mut g, &ids)?;
    g.backward(out)?;
    let analytic = ids
        .iter()
        .zip(model.params.values())
        .flat_map(|(&id, v)| match g.grad(id) {
            Some(m) => m.data().to_vec(),
            None => vec![0.0; v.len()],
        })
        .collect();
    Ok(ModelGradCheck { report, analytic })
}

/// A deliberately small configuration (4 channels, 3 segments, 2 bands)
/// that still exercises every stage.
pub fn small_check_config(seed: u64) -> TrainConfig {
    TrainConfig {
        n: 4,
        k: 3,
        regions: 3,
        lstm_hidden: 2,
        region_dim: Some(3),
        node_dim: Some(3),
        gat_layers: 2,
        gat_hidden: 3,
        heads: 2,
        disc_hidden: 4,
        bands: vec!["theta".into(), "alpha".into()],
        seed,
        ..TrainConfig::default()
    }
}

/// Glorot-initialised small model, two labelled source samples and two
/// target samples with entries uniform in [-1, 1].
pub fn check_end_to_end(seed: u64, tol: f64) -> Result<ModelGradCheck, TrainError> {
    let cfg = small_check_config(seed);
    let model = cfg.build_model(cfg.bands.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let mut draw = |label: u8| FeatureSample {
        n: cfg.n,
        k: cfg.k,
        bands: cfg.bands.len(),
        x: (0..cfg.n * cfg.k * cfg.bands.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
        valence: label,
        arousal: label,
        participant: 0,
        trial: 0,
        sample_index: 0,
    };
    let source = [draw(0), draw(1)];
    let target = [draw(0), draw(1)];
    let source: Vec<&FeatureSample> = source.iter().collect();
    let target: Vec<&FeatureSample> = target.iter().collect();
    check_model(&model, &source, &[0, 1], &target, tol)
}
