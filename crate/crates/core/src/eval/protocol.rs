use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;

use super::folds::{make_plan, verify_plan, Fold, FoldPlan, Paradigm, Unit};
use super::metrics::MetricsRecord;
use super::EvalError;
use crate::config::TrainConfig;
use crate::model::Model;
use crate::signal::dataset::FeatureSet;
use crate::signal::{Dimension, FeatureSample, Standardizer};
use crate::train::{train, TrainHistory};

/// Environment variable bounding the fold worker pool.
pub const THREADS_ENV: &str = "LTSGAT_THREADS";

/// Worker count: `LTSGAT_THREADS` when set to a positive integer, else the
/// available parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Metrics of `model` on labelled samples.
pub fn evaluate(
    model: &Model,
    samples: &[&FeatureSample],
    dimension: Dimension,
) -> Result<MetricsRecord, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let predictions = model.predict(samples)?;
    let labels: Vec<u8> = samples.iter().map(|s| s.label(dimension)).collect();
    MetricsRecord::from_predictions(&predictions, &labels)
}

/// Standardized samples of one fold. The statistics come from the training
/// side only.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub train: Vec<FeatureSample>,
    pub test: Vec<FeatureSample>,
    pub standardizer: Standardizer,
}

pub fn fold_data(samples: &[FeatureSample], fold: &Fold) -> Result<FoldData, EvalError> {
    let train_units: BTreeSet<Unit> = fold.train.iter().copied().collect();
    let test_units: BTreeSet<Unit> = fold.test.iter().copied().collect();
    let raw_train: Vec<&FeatureSample> = samples
        .iter()
        .filter(|s| train_units.contains(&(s.participant, s.trial)))
        .collect();
    let raw_test: Vec<&FeatureSample> = samples
        .iter()
        .filter(|s| test_units.contains(&(s.participant, s.trial)))
        .collect();
    if raw_test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let standardizer = Standardizer::fit(&raw_train)?;
    Ok(FoldData {
        train: raw_train.iter().map(|s| standardizer.apply(s)).collect(),
        test: raw_test.iter().map(|s| standardizer.apply(s)).collect(),
        standardizer,
    })
}

/// Trains a fresh model on the fold's training side and scores the test
/// side. Domain adaptation only applies across participants: in the
/// independent paradigm the unlabelled test features are the target domain
/// (their labels are only read for scoring); the dependent paradigm always
/// trains without a discriminator.
pub fn run_fold(
    samples: &[FeatureSample],
    fold: &Fold,
    paradigm: Paradigm,
    cfg: &TrainConfig,
    d_b: usize,
) -> Result<(MetricsRecord, Model, TrainHistory), EvalError> {
    let data = fold_data(samples, fold)?;
    let mut cfg = cfg.clone();
    if paradigm == Paradigm::Dependent {
        cfg.disable_domain_adaptation = true;
    }
    let model = cfg.build_model(d_b)?;
    let source: Vec<&FeatureSample> = data.train.iter().collect();
    let test: Vec<&FeatureSample> = data.test.iter().collect();
    let target: &[&FeatureSample] = if cfg.disable_domain_adaptation { &[] } else { &test };
    let (model, history) = train(model, &source, target, &cfg)?;
    let metrics = evaluate(&model, &test, cfg.dimension)?;
    Ok((metrics, model, history))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub dimension: Dimension,
    pub fold: usize,
    pub participant: u32,
    pub metrics: MetricsRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldFailure {
    pub dimension: Dimension,
    pub fold: usize,
    pub participant: u32,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct ProtocolReport {
    pub plan: FoldPlan,
    pub dimensions: Vec<Dimension>,
    /// Sorted by dimension, then fold id.
    pub results: Vec<FoldResult>,
    pub failures: Vec<FoldFailure>,
}

fn mean_metrics(records: &[&MetricsRecord]) -> [f64; 3] {
    let n = records.len() as f64;
    let mut acc = [0.0; 3];
    for r in records {
        acc[0] += r.accuracy;
        acc[1] += r.f1_pos;
        acc[2] += r.f1_macro;
    }
    acc.map(|v| v / n)
}

impl ProtocolReport {
    fn of(&self, dimension: Dimension) -> impl Iterator<Item = &FoldResult> {
        self.results.iter().filter(move |r| r.dimension == dimension)
    }

    /// Per-participant means over that participant's folds.
    pub fn participant_means(&self, dimension: Dimension) -> BTreeMap<u32, [f64; 3]> {
        let mut groups: BTreeMap<u32, Vec<&MetricsRecord>> = BTreeMap::new();
        for r in self.of(dimension) {
            groups.entry(r.participant).or_default().push(&r.metrics);
        }
        groups
            .into_iter()
            .map(|(p, records)| (p, mean_metrics(&records)))
            .collect()
    }

    /// Mean over participants of the per-participant means: accuracy,
    /// positive F1, macro F1. `None` when every fold failed.
    pub fn summary(&self, dimension: Dimension) -> Option<[f64; 3]> {
        let per = self.participant_means(dimension);
        if per.is_empty() {
            return None;
        }
        let n = per.len() as f64;
        Some(per.values().fold([0.0; 3], |mut acc, m| {
            for i in 0..3 {
                acc[i] += m[i] / n;
            }
            acc
        }))
    }

    /// One row per fold, then one mean row per participant (dependent
    /// paradigm only) and an overall row with participant `all`.
    pub fn summary_csv(&self) -> String {
        let paradigm = self.plan.paradigm.name();
        let mut out = String::from("paradigm,dimension,fold,participant,accuracy,f1_pos,f1_macro\n");
        for &dim in &self.dimensions {
            for r in self.of(dim) {
                let m = &r.metrics;
                let _ = writeln!(
                    out,
                    "{paradigm},{},{},{},{},{},{}",
                    dim.name(),
                    r.fold,
                    r.participant,
                    m.accuracy,
                    m.f1_pos,
                    m.f1_macro
                );
            }
            if self.plan.paradigm == Paradigm::Dependent {
                for (p, m) in self.participant_means(dim) {
                    let _ = writeln!(
                        out,
                        "{paradigm},{},mean,{p},{},{},{}",
                        dim.name(),
                        m[0],
                        m[1],
                        m[2]
                    );
                }
            }
            if let Some(m) = self.summary(dim) {
                let _ = writeln!(
                    out,
                    "{paradigm},{},mean,all,{},{},{}",
                    dim.name(),
                    m[0],
                    m[1],
                    m[2]
                );
            }
        }
        out
    }
}

/// Runs every fold of `paradigm` for each dimension on a bounded worker
/// pool. A failing fold is recorded and the others still run.
pub fn run_protocol(
    features: &FeatureSet,
    paradigm: Paradigm,
    cfg: &TrainConfig,
    dimensions: &[Dimension],
) -> Result<ProtocolReport, EvalError> {
    let names: Vec<String> = features.bands.iter().map(|b| b.name.clone()).collect();
    let selected;
    let features = if names == cfg.bands {
        features
    } else {
        selected = features.select_bands(&cfg.bands)?;
        &selected
    };
    let plan = make_plan(&features.samples, paradigm, cfg.folds, cfg.seed)?;
    verify_plan(&plan, &features.samples)?;

    let jobs: Vec<(Dimension, &Fold)> = dimensions
        .iter()
        .flat_map(|&d| plan.folds.iter().map(move |f| (d, f)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))?;
    let d_b = features.d_b();
    let outcomes: Vec<Result<FoldResult, FoldFailure>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(dimension, fold)| {
                let mut fold_cfg = cfg.clone();
                fold_cfg.dimension = dimension;
                match run_fold(&features.samples, fold, paradigm, &fold_cfg, d_b) {
                    Ok((metrics, _, _)) => {
                        log::info!(
                            "{} fold {} (participant {}): accuracy {:.4}",
                            dimension.name(),
                            fold.id,
                            fold.participant,
                            metrics.accuracy
                        );
                        Ok(FoldResult {
                            dimension,
                            fold: fold.id,
                            participant: fold.participant,
                            metrics,
                        })
                    }
                    Err(e) => {
                        log::error!("{} fold {} failed: {e}", dimension.name(), fold.id);
                        Err(FoldFailure {
                            dimension,
                            fold: fold.id,
                            participant: fold.participant,
                            error: e.to_string(),
                        })
                    }
                }
            })
            .collect()
    });

    let (mut results, mut failures) = (Vec::new(), Vec::new());
    for o in outcomes {
        match o {
            Ok(r) => results.push(r),
            Err(f) => failures.push(f),
        }
    }
    results.sort_by_key(|r| (r.dimension, r.fold));
    failures.sort_by_key(|f| (f.dimension, f.fold));
    Ok(ProtocolReport {
        plan,
        dimensions: dimensions.to_vec(),
        results,
        failures,
    })
}
