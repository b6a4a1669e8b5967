use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::adam::Adam;
use super::schedule::{lambda_schedule, progress};
use super::TrainError;
use crate::autodiff::Graph;
use crate::config::TrainConfig;
use crate::model::{DomainPath, Model};
use crate::signal::FeatureSample;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub class_loss: f64,
    pub domain_loss: Option<f64>,
    /// Reversal coefficient of the epoch's last batch.
    pub lambda: Option<f64>,
    pub source_accuracy: f64,
    /// Accuracy on the target set after the epoch, using its labels for
    /// reporting only.
    pub target_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    /// Domain columns appear only when domain adaptation ran.
    pub fn to_csv(&self) -> String {
        let with_domain = self.records.iter().any(|r| r.domain_loss.is_some());
        let with_target = self.records.iter().any(|r| r.target_accuracy.is_some());
        let mut header = vec!["epoch", "class_loss"];
        if with_domain {
            header.extend(["domain_loss", "lambda"]);
        }
        header.push("source_accuracy");
        if with_target {
            header.push("target_accuracy");
        }
        let mut out = header.join(",") + "\n";
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for r in &self.records {
            let mut row = vec![r.epoch.to_string(), r.class_loss.to_string()];
            if with_domain {
                row.push(opt(r.domain_loss));
                row.push(opt(r.lambda));
            }
            row.push(r.source_accuracy.to_string());
            if with_target {
                row.push(opt(r.target_accuracy));
            }
            out += &(row.join(",") + "\n");
        }
        out
    }
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Cycles through the target set in reshuffled passes.
struct TargetCycle<'a> {
    samples: &'a [&'a FeatureSample],
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl<'a> TargetCycle<'a> {
    fn new(samples: &'a [&'a FeatureSample], seed: u64) -> Self {
        let mut rng = seeded(seed, 2);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);
        Self {
            samples,
            order,
            pos: 0,
            rng,
        }
    }

    fn take(&mut self, count: usize) -> Vec<&'a FeatureSample> {
        (0..count)
            .map(|_| {
                if self.pos == self.order.len() {
                    self.order.shuffle(&mut self.rng);
                    self.pos = 0;
                }
                self.pos += 1;
                self.samples[self.order[self.pos - 1]]
            })
            .collect()
    }
}

pub fn accuracy(predictions: &[u8], labels: &[u8]) -> f64 {
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len().max(1) as f64
}

/// Trains `model` on labelled `source` samples. When the model has a
/// discriminator and `target` is non-empty, every batch pairs the source
/// batch with an equally sized target batch for the domain loss.
///
/// Shuffling is seeded from `cfg.seed`; the run is deterministic.
pub fn train(
    mut model: Model,
    source: &[&FeatureSample],
    target: &[&FeatureSample],
    cfg: &TrainConfig,
) -> Result<(Model, TrainHistory), TrainError> {
    if source.is_empty() {
        return Err(TrainError::EmptySource);
    }
    let adapt = model.layout.discriminator.is_some() && !target.is_empty();
    if model.layout.discriminator.is_some() && target.is_empty() {
        log::warn!("domain adaptation enabled but no target samples; training without it");
    }
    let batch_size = cfg.batch_size.max(1);
    let batches = source.len().div_ceil(batch_size);
    let mut adam = Adam::new(&model.params, cfg.learning_rate);
    let mut order: Vec<usize> = (0..source.len()).collect();
    let mut shuffle_rng = seeded(cfg.seed, 1);
    let mut targets = TargetCycle::new(target, cfg.seed);
    let mut history = TrainHistory::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut class_sum, mut domain_sum, mut hits, mut seen) = (0.0, 0.0, 0usize, 0usize);
        let mut lambda = None;
        for (bi, chunk) in order.chunks(batch_size).enumerate() {
            let src: Vec<&FeatureSample> = chunk.iter().map(|&i| source[i]).collect();
            let labels: Vec<u8> = src.iter().map(|s| s.label(cfg.dimension)).collect();
            let tgt = if adapt { targets.take(src.len()) } else { Vec::new() };
            let lam = cfg
                .lambda_override
                .unwrap_or_else(|| lambda_schedule(progress(epoch, bi + 1, cfg.epochs, batches)));

            let mut g = Graph::new();
            let bound = model.params.bind(&mut g);
            let losses = model.losses(&mut g, &bound, &src, &labels, &tgt, DomainPath::Reversed(lam))?;
            let lc = g.value(losses.classification).get(0, 0);
            let ld = losses.domain.map(|d| g.value(d).get(0, 0));
            if !lc.is_finite() || ld.is_some_and(|v| !v.is_finite()) {
                return Err(TrainError::Diverged {
                    epoch,
                    batch: bi + 1,
                    last_good: Box::new(model),
                });
            }
            let probs = g.value(losses.source_probs);
            hits += labels
                .iter()
                .enumerate()
                .filter(|(i, &y)| u8::from(probs.get(*i, 1) > probs.get(*i, 0)) == y)
                .count();
            seen += labels.len();
            class_sum += lc * labels.len() as f64;
            if let Some(ld) = ld {
                domain_sum += ld * labels.len() as f64;
                lambda = Some(lam);
            }

            g.backward(losses.total)?;
            let grads: Vec<_> = bound.ids().iter().map(|&id| g.grad(id).cloned()).collect();
            adam.update(&mut model.params, &grads)?;
        }

        let target_accuracy = if target.is_empty() {
            None
        } else {
            let preds = model.predict(target)?;
            let labels: Vec<u8> = target.iter().map(|s| s.label(cfg.dimension)).collect();
            Some(accuracy(&preds, &labels))
        };
        let record = EpochRecord {
            epoch,
            class_loss: class_sum / seen as f64,
            domain_loss: adapt.then(|| domain_sum / seen as f64),
            lambda: if adapt { lambda } else { None },
            source_accuracy: hits as f64 / seen as f64,
            target_accuracy,
        };
        log::debug!(
            "epoch {epoch}: class loss {:.5}, source accuracy {:.4}",
            record.class_loss,
            record.source_accuracy
        );
        history.records.push(record);
    }
    Ok((model, history))
}
