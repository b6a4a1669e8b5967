use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gat::{gat_stack, GatLayerParams};
use super::heads::{
    classify, cross_entropy, discriminate, mean_pool, ClassifierParams, DiscriminatorParams,
};
use super::params::{Bound, ParamStore};
use super::spatial::{
    bilstm_sequence, expand_to_nodes, partition_and_embed, region_attention, LstmParams,
    RegionParams,
};
use super::temporal::{temporal_attention, TemporalParams};
use super::topology::Topology;
use super::ModelError;
use crate::autodiff::{Graph, GraphError, Matrix, NodeId};
use crate::montage::RegionMap;
use crate::signal::FeatureSample;

/// Architecture sizes and ablation switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Channels (graph nodes).
    pub n: usize,
    /// Segments per sample.
    pub k: usize,
    /// Frequency bands.
    pub d_b: usize,
    pub lstm_hidden: usize,
    pub region_dim: usize,
    /// Node feature size after region expansion.
    pub node_dim: usize,
    pub gat_hidden: usize,
    pub heads: usize,
    pub gat_layers: usize,
    pub disc_hidden: usize,
    pub leaky_slope: f64,
    pub temporal: bool,
    pub spatial: bool,
    pub domain_adaptation: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let sizes = [
            ("n", self.n),
            ("k", self.k),
            ("d_b", self.d_b),
            ("lstm_hidden", self.lstm_hidden),
            ("region_dim", self.region_dim),
            ("node_dim", self.node_dim),
            ("gat_hidden", self.gat_hidden),
            ("heads", self.heads),
            ("gat_layers", self.gat_layers),
            ("disc_hidden", self.disc_hidden),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be positive")));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(ModelError::Config(format!(
                "leaky_slope must be finite and non-negative, got {}",
                self.leaky_slope
            )));
        }
        Ok(())
    }

    /// Width of the features entering the first graph layer.
    pub fn gat_input_dim(&self) -> usize {
        if self.spatial {
            self.node_dim
        } else {
            self.k * self.d_b
        }
    }
}

/// Parameter indices of every enabled component.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub temporal: Option<TemporalParams>,
    pub lstm: Option<LstmParams>,
    pub region: Option<RegionParams>,
    pub gat: Vec<GatLayerParams>,
    pub classifier: ClassifierParams,
    pub discriminator: Option<DiscriminatorParams>,
}

/// Graph nodes of one forward pass over a batch.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Final node features, one `n x gat_hidden` node per sample.
    pub features: Vec<NodeId>,
    /// `B x gat_hidden`, row `s` is the node average of sample `s`.
    pub pooled: NodeId,
    pub traces: Vec<Trace>,
}

/// Attention nodes of one sample.
#[derive(Debug, Clone)]
pub struct Trace {
    /// One `k x k` column-stochastic matrix per band.
    pub temporal: Vec<NodeId>,
    /// `N x N` row-stochastic region weights.
    pub region: Option<NodeId>,
    /// Per layer, per head `n x n` attention.
    pub gat: Vec<Vec<NodeId>>,
}

/// How the discriminator is attached to the shared features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainPath {
    /// Through gradient reversal with the given coefficient.
    Reversed(f64),
    /// Plain connection, used to compute the discriminator's own gradient.
    Direct,
}

#[derive(Debug, Clone, Copy)]
pub struct Losses {
    pub classification: NodeId,
    pub domain: Option<NodeId>,
    /// `classification + domain`.
    pub total: NodeId,
    /// Class probabilities of the source rows.
    pub source_probs: NodeId,
}

/// Attention values of one sample, detached from any graph.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionValues {
    pub temporal: Vec<Matrix>,
    pub region: Option<Matrix>,
    pub gat: Vec<Vec<Matrix>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub regions: RegionMap,
    pub topology: Topology,
    pub params: ParamStore,
    pub layout: Layout,
    region_of_channel: Vec<usize>,
}

fn ctx(module: &'static str) -> impl Fn(GraphError) -> ModelError {
    move |source| ModelError::Graph { module, source }
}

/// Samples per graph when evaluating without gradients.
const EVAL_CHUNK: usize = 64;

impl Model {
    /// Registers all parameters in a fixed order using a generator seeded
    /// with `seed`.
    pub fn new(
        config: ModelConfig,
        regions: RegionMap,
        topology: Topology,
        seed: u64,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let n = config.n;
        if config.spatial {
            regions.validate(n)?;
        }
        if topology.n() != n {
            return Err(ModelError::Config(format!(
                "topology has {} nodes, expected {n}",
                topology.n()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let temporal = config
            .temporal
            .then(|| TemporalParams::register(&mut store, n, config.k, &mut rng));
        let (lstm, region) = if config.spatial {
            let lstm = LstmParams::register(
                &mut store,
                config.lstm_hidden,
                config.k * config.d_b,
                &mut rng,
            );
            let region = RegionParams::register(
                &mut store,
                &regions,
                2 * config.lstm_hidden,
                config.region_dim,
                config.node_dim,
                &mut rng,
            );
            (Some(lstm), Some(region))
        } else {
            (None, None)
        };
        let mut in_dim = config.gat_input_dim();
        let gat = (0..config.gat_layers)
            .map(|l| {
                let layer = GatLayerParams::register(
                    &mut store,
                    l,
                    in_dim,
                    config.gat_hidden,
                    config.heads,
                    &mut rng,
                );
                in_dim = config.gat_hidden;
                layer
            })
            .collect();
        let classifier = ClassifierParams::register(&mut store, config.gat_hidden, &mut rng);
        let discriminator = config.domain_adaptation.then(|| {
            DiscriminatorParams::register(&mut store, config.gat_hidden, config.disc_hidden, &mut rng)
        });
        let region_of_channel = if config.spatial {
            regions.region_of_channels()
        } else {
            Vec::new()
        };
        Ok(Self {
            config,
            regions,
            topology,
            params: store,
            layout: Layout {
                temporal,
                lstm,
                region,
                gat,
                classifier,
                discriminator,
            },
            region_of_channel,
        })
    }

    /// Number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Indices of the parameters shared by both heads (everything before the
    /// classifier).
    pub fn shared_parameter_indices(&self) -> std::ops::Range<usize> {
        0..self.layout.classifier.out.weight
    }

    pub fn discriminator_parameter_indices(&self) -> std::ops::Range<usize> {
        match &self.layout.discriminator {
            Some(d) => d.hidden.weight..self.params.len(),
            None => self.params.len()..self.params.len(),
        }
    }

    fn check_sample(&self, s: &FeatureSample) -> Result<(), ModelError> {
        let c = &self.config;
        if (s.n, s.k, s.bands) != (c.n, c.k, c.d_b) {
            return Err(ModelError::InputShape {
                expected: (c.n, c.k, c.d_b),
                actual: (s.n, s.k, s.bands),
            });
        }
        Ok(())
    }

    /// Builds the shared feature extractor for a batch.
    pub fn forward(
        &self,
        g: &mut Graph,
        b: &Bound,
        samples: &[&FeatureSample],
    ) -> Result<Forward, ModelError> {
        if samples.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let c = &self.config;
        let mut xs = Vec::with_capacity(samples.len());
        let mut temporal = Vec::with_capacity(samples.len());
        for s in samples {
            self.check_sample(s)?;
            let x = g.constant(s.flat_matrix());
            match &self.layout.temporal {
                Some(p) => {
                    let (out, w) =
                        temporal_attention(g, p, b, x, c.k, c.d_b).map_err(ctx("temporal"))?;
                    xs.push(out);
                    temporal.push(w);
                }
                None => {
                    xs.push(x);
                    temporal.push(Vec::new());
                }
            }
        }

        let mut region_weights = vec![None; samples.len()];
        let nodes = match (&self.layout.lstm, &self.layout.region) {
            (Some(lstm), Some(region)) => {
                let seqs = bilstm_sequence(g, lstm, b, &xs).map_err(ctx("lstm"))?;
                seqs.into_iter()
                    .zip(region_weights.iter_mut())
                    .map(|(s, slot)| {
                        let emb = partition_and_embed(g, region, b, &self.regions, s)?;
                        let (h, w) = region_attention(g, region, b, emb)?;
                        *slot = Some(w);
                        expand_to_nodes(g, region, b, &self.region_of_channel, h)
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(ctx("region"))?
            }
            _ => xs,
        };

        let mut features = Vec::with_capacity(samples.len());
        let mut pooled = Vec::with_capacity(samples.len());
        let mut traces = Vec::with_capacity(samples.len());
        for ((z, t), r) in nodes.into_iter().zip(temporal).zip(region_weights) {
            let (out, attn) = gat_stack(g, &self.layout.gat, b, z, &self.topology, c.leaky_slope)
                .map_err(ctx("gat"))?;
            pooled.push(mean_pool(g, out).map_err(ctx("pool"))?);
            features.push(out);
            traces.push(Trace {
                temporal: t,
                region: r,
                gat: attn,
            });
        }
        let pooled = g.concat_rows(&pooled).map_err(ctx("pool"))?;
        Ok(Forward {
            features,
            pooled,
            traces,
        })
    }

    /// Classification loss on `source` and, when a target batch is given and
    /// the discriminator exists, the domain loss over source (label 0) then
    /// target (label 1) rows.
    pub fn losses(
        &self,
        g: &mut Graph,
        b: &Bound,
        source: &[&FeatureSample],
        labels: &[u8],
        target: &[&FeatureSample],
        path: DomainPath,
    ) -> Result<Losses, ModelError> {
        if labels.len() != source.len() {
            return Err(ModelError::Config(format!(
                "{} labels for {} samples",
                labels.len(),
                source.len()
            )));
        }
        let all: Vec<&FeatureSample> = source.iter().chain(target).copied().collect();
        let fwd = self.forward(g, b, &all)?;
        let slope = self.config.leaky_slope;
        let src_rows: Vec<usize> = (0..source.len()).collect();
        let src_pooled = if target.is_empty() {
            fwd.pooled
        } else {
            g.select_rows(fwd.pooled, &src_rows).map_err(ctx("classifier"))?
        };
        let probs = classify(g, &self.layout.classifier, b, src_pooled).map_err(ctx("classifier"))?;
        let lc = cross_entropy(g, probs, labels).map_err(ctx("classifier"))?;

        let domain = match (&self.layout.discriminator, target.is_empty()) {
            (Some(d), false) => {
                let reverse = match path {
                    DomainPath::Reversed(lambda) => Some(lambda),
                    DomainPath::Direct => None,
                };
                let dp = discriminate(g, d, b, fwd.pooled, reverse, slope)
                    .map_err(ctx("discriminator"))?;
                let domains: Vec<u8> = (0..all.len()).map(|i| u8::from(i >= source.len())).collect();
                Some(cross_entropy(g, dp, &domains).map_err(ctx("discriminator"))?)
            }
            _ => None,
        };
        let total = match domain {
            Some(ld) => g.add(lc, ld).map_err(ctx("loss"))?,
            None => lc,
        };
        Ok(Losses {
            classification: lc,
            domain,
            total,
            source_probs: probs,
        })
    }

    fn chunked<T>(
        &self,
        samples: &[&FeatureSample],
        mut f: impl FnMut(&Graph, &Forward, usize) -> Result<T, ModelError>,
        with_probs: bool,
    ) -> Result<Vec<(T, Option<[f64; 2]>)>, ModelError> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(EVAL_CHUNK) {
            let mut g = Graph::new();
            let b = self.params.bind(&mut g);
            let fwd = self.forward(&mut g, &b, chunk)?;
            let probs = if with_probs {
                Some(
                    classify(&mut g, &self.layout.classifier, &b, fwd.pooled)
                        .map_err(ctx("classifier"))?,
                )
            } else {
                None
            };
            for i in 0..chunk.len() {
                let p = probs.map(|p| {
                    let v = g.value(p);
                    [v.get(i, 0), v.get(i, 1)]
                });
                out.push((f(&g, &fwd, i)?, p));
            }
        }
        Ok(out)
    }

    /// Class probabilities `[p_low, p_high]` of every sample.
    pub fn predict_proba(&self, samples: &[&FeatureSample]) -> Result<Vec<[f64; 2]>, ModelError> {
        Ok(self
            .chunked(samples, |_, _, _| Ok(()), true)?
            .into_iter()
            .map(|(_, p)| p.expect("probabilities requested"))
            .collect())
    }

    /// Arg-max class; ties go to class 0.
    pub fn predict(&self, samples: &[&FeatureSample]) -> Result<Vec<u8>, ModelError> {
        Ok(self
            .predict_proba(samples)?
            .into_iter()
            .map(|p| u8::from(p[1] > p[0]))
            .collect())
    }

    /// Node-averaged final features of every sample.
    pub fn pooled_features(&self, samples: &[&FeatureSample]) -> Result<Vec<Vec<f64>>, ModelError> {
        Ok(self
            .chunked(
                samples,
                |g, fwd, i| Ok(g.value(fwd.pooled).row_slice(i).to_vec()),
                false,
            )?
            .into_iter()
            .map(|(v, _)| v)
            .collect())
    }

    /// Attention matrices of every sample.
    pub fn attention(&self, samples: &[&FeatureSample]) -> Result<Vec<AttentionValues>, ModelError> {
        Ok(self
            .chunked(
                samples,
                |g, fwd, i| {
                    let t = &fwd.traces[i];
                    Ok(AttentionValues {
                        temporal: t.temporal.iter().map(|&id| g.value(id).clone()).collect(),
                        region: t.region.map(|id| g.value(id).clone()),
                        gat: t
                            .gat
                            .iter()
                            .map(|layer| layer.iter().map(|&id| g.value(id).clone()).collect())
                            .collect(),
                    })
                },
                false,
            )?
            .into_iter()
            .map(|(v, _)| v)
            .collect())
    }
}
