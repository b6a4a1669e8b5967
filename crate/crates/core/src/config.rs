//! Training configuration, named hyper-parameter presets and layered
//! loading (preset, then file, then explicit overrides).

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::model::{Model, ModelConfig, ModelError, Topology, TopologyConfig};
use crate::montage::{Electrodes, MontageError, RegionMap};
use crate::signal::Dimension;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

pub const PRESETS: [&str; 5] = ["hci-dep", "hci-indep", "deap-dep", "deap-indep", "custom"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown preset `{0}` (expected one of hci-dep, hci-indep, deap-dep, deap-indep, custom)")]
    UnknownPreset(String),
    #[error("unknown configuration keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("configuration schema version {found}, expected {expected}")]
    SchemaVersion { found: u64, expected: u32 },
    #[error("configuration must be a JSON object")]
    NotAnObject,
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Montage(#[from] MontageError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Every knob of a training run. Serialises to the flat JSON object that
/// config files and checkpoint echoes use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub schema_version: u32,
    pub preset: String,
    /// Segments per sample.
    pub k: usize,
    /// Cortical regions in the region map.
    pub regions: usize,
    /// Channels.
    pub n: usize,
    pub lstm_hidden: usize,
    /// Region embedding size; `2 * lstm_hidden` when unset.
    pub region_dim: Option<usize>,
    /// Node size after region expansion; `gat_hidden` when unset.
    pub node_dim: Option<usize>,
    pub gat_layers: usize,
    pub gat_hidden: usize,
    pub heads: usize,
    pub disc_hidden: usize,
    pub leaky_slope: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub bands: Vec<String>,
    pub disable_temporal: bool,
    pub disable_spatial: bool,
    pub disable_domain_adaptation: bool,
    pub rating_threshold_inclusive: bool,
    /// Fixed reversal coefficient instead of the progress schedule.
    pub lambda_override: Option<f64>,
    pub topology: TopologyConfig,
    /// Region map JSON; the bundled 32-channel map when unset.
    pub regions_path: Option<String>,
    pub dimension: Dimension,
    /// Folds of the within-participant protocol.
    pub folds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            preset: "custom".into(),
            k: 10,
            regions: 9,
            n: 32,
            lstm_hidden: 16,
            region_dim: None,
            node_dim: None,
            gat_layers: 4,
            gat_hidden: 28,
            heads: 2,
            disc_hidden: 64,
            leaky_slope: 0.2,
            learning_rate: 0.001,
            batch_size: 24,
            epochs: 20,
            seed: 0,
            bands: ["theta", "alpha", "beta", "gamma"].map(String::from).to_vec(),
            disable_temporal: false,
            disable_spatial: false,
            disable_domain_adaptation: false,
            rating_threshold_inclusive: true,
            lambda_override: None,
            topology: TopologyConfig::Full,
            regions_path: None,
            dimension: Dimension::Valence,
            folds: 10,
        }
    }
}

impl TrainConfig {
    /// Reference hyper-parameters for the two datasets and paradigms.
    /// `custom` is the unmodified default.
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let (lstm_hidden, gat_hidden, heads, learning_rate, batch_size, epochs) = match name {
            "hci-dep" => (16, 28, 2, 0.001, 24, 20),
            "hci-indep" => (48, 16, 4, 0.001, 128, 15),
            "deap-dep" => (32, 18, 2, 0.001, 128, 20),
            "deap-indep" => (32, 16, 4, 0.0001, 80, 30),
            "custom" => return Ok(Self::default()),
            other => return Err(ConfigError::UnknownPreset(other.to_string())),
        };
        Ok(Self {
            preset: name.into(),
            lstm_hidden,
            gat_hidden,
            heads,
            learning_rate,
            batch_size,
            epochs,
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion {
                found: self.schema_version.into(),
                expected: CONFIG_SCHEMA_VERSION,
            });
        }
        let counts = [
            ("k", self.k),
            ("regions", self.regions),
            ("n", self.n),
            ("lstm_hidden", self.lstm_hidden),
            ("gat_layers", self.gat_layers),
            ("gat_hidden", self.gat_hidden),
            ("heads", self.heads),
            ("disc_hidden", self.disc_hidden),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("folds", self.folds),
            ("region_dim", self.region_dim.unwrap_or(1)),
            ("node_dim", self.node_dim.unwrap_or(1)),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return bad(format!("{name} must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.bands.is_empty() {
            return bad("bands must not be empty".into());
        }
        if let Some(l) = self.lambda_override {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("lambda_override must be >= 0, got {l}"));
            }
        }
        if let TopologyConfig::Distance { threshold, coords } = &self.topology {
            if !(*threshold > 0.0) {
                return bad(format!("topology threshold must be positive, got {threshold}"));
            }
            if coords.as_ref().is_some_and(|c| c.len() != self.n) {
                return bad(format!("topology coords must list {} positions", self.n));
            }
        }
        Ok(())
    }

    /// Architecture for features with `d_b` bands.
    pub fn model_config(&self, d_b: usize) -> ModelConfig {
        ModelConfig {
            n: self.n,
            k: self.k,
            d_b,
            lstm_hidden: self.lstm_hidden,
            region_dim: self.region_dim.unwrap_or(2 * self.lstm_hidden),
            node_dim: self.node_dim.unwrap_or(self.gat_hidden),
            gat_hidden: self.gat_hidden,
            heads: self.heads,
            gat_layers: self.gat_layers,
            disc_hidden: self.disc_hidden,
            leaky_slope: self.leaky_slope,
            temporal: !self.disable_temporal,
            spatial: !self.disable_spatial,
            domain_adaptation: !self.disable_domain_adaptation,
        }
    }

    /// The region map: the file if configured, the bundled map for 32
    /// channels, otherwise contiguous groups.
    pub fn region_map(&self) -> Result<RegionMap, ConfigError> {
        let map = match &self.regions_path {
            Some(p) => RegionMap::load(Path::new(p))?,
            None if self.n == 32 && self.regions == 9 => RegionMap::default_32(),
            None => {
                if self.regions > self.n {
                    return Err(ConfigError::Invalid(format!(
                        "{} regions for {} channels",
                        self.regions, self.n
                    )));
                }
                RegionMap::contiguous(self.n, self.regions)
            }
        };
        map.validate(self.n)?;
        if map.len() != self.regions {
            return Err(ConfigError::Invalid(format!(
                "region map has {} regions, configuration says {}",
                map.len(),
                self.regions
            )));
        }
        Ok(map)
    }

    pub fn graph_topology(&self) -> Result<Topology, ConfigError> {
        match &self.topology {
            TopologyConfig::Full => Ok(Topology::full(self.n)),
            TopologyConfig::Distance { threshold, coords } => match coords {
                Some(c) => Ok(Topology::from_coords(c, *threshold)),
                None if self.n == 32 => Ok(Topology::distance(&Electrodes::default_32(), *threshold)),
                None => Err(ConfigError::Invalid(
                    "distance topology needs coords unless n = 32".into(),
                )),
            },
        }
    }

    /// Freshly initialised model seeded from `seed`.
    pub fn build_model(&self, d_b: usize) -> Result<Model, ConfigError> {
        let regions = if self.disable_spatial {
            RegionMap::single(self.n)
        } else {
            self.region_map()?
        };
        Ok(Model::new(
            self.model_config(d_b),
            regions,
            self.graph_topology()?,
            self.seed,
        )?)
    }

    /// Overlays the keys of `layer` onto this configuration. All unknown
    /// keys are reported together.
    pub fn overlay(&self, layer: &Map<String, Value>) -> Result<Self, ConfigError> {
        let Value::Object(mut base) = serde_json::to_value(self).expect("config serialises") else {
            unreachable!("config is an object")
        };
        let unknown: Vec<String> = layer
            .keys()
            .filter(|k| !base.contains_key(*k))
            .cloned()
            .collect();
        if !unknown.is_empty() {
            return Err(ConfigError::UnknownKeys(unknown));
        }
        if let Some(v) = layer.get("schema_version") {
            let found = v.as_u64().unwrap_or(u64::MAX);
            if found != u64::from(CONFIG_SCHEMA_VERSION) {
                return Err(ConfigError::SchemaVersion {
                    found,
                    expected: CONFIG_SCHEMA_VERSION,
                });
            }
        }
        for (k, v) in layer {
            base.insert(k.clone(), v.clone());
        }
        let cfg: TrainConfig =
            serde_json::from_value(Value::Object(base)).map_err(|source| ConfigError::Json {
                context: "configuration".into(),
                source,
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

/// Names accepted as configuration keys.
pub fn config_keys() -> BTreeSet<String> {
    match serde_json::to_value(TrainConfig::default()).expect("config serialises") {
        Value::Object(m) => m.keys().cloned().collect(),
        _ => unreachable!(),
    }
}

/// Resolves a configuration: the preset (explicit, else the file's
/// `preset` key, else `custom`), then the file, then `overrides`.
pub fn load_config(
    path: Option<&Path>,
    preset: Option<&str>,
    overrides: &Map<String, Value>,
) -> Result<TrainConfig, ConfigError> {
    let file = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.display().to_string(),
                source,
            })?;
            if text.trim().is_empty() {
                Map::new()
            } else {
                match serde_json::from_str::<Value>(&text).map_err(|source| ConfigError::Json {
                    context: p.display().to_string(),
                    source,
                })? {
                    Value::Object(m) => m,
                    _ => return Err(ConfigError::NotAnObject),
                }
            }
        }
        None => Map::new(),
    };
    let preset_name = match (preset, file.get("preset")) {
        (Some(p), _) => p.to_string(),
        (None, Some(Value::String(p))) => p.clone(),
        (None, Some(_)) => return Err(ConfigError::Invalid("preset must be a string".into())),
        (None, None) => "custom".to_string(),
    };
    let mut cfg = TrainConfig::preset(&preset_name)?;
    let mut file = file;
    if preset.is_some() {
        // An explicit preset wins over the file's own preset key.
        file.remove("preset");
    }
    cfg = cfg.overlay(&file)?;
    cfg = cfg.overlay(overrides)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn obj(v: Value) -> Map<String, Value> {
        match v {
            Value::Object(m) => m,
            _ => panic!("not an object"),
        }
    }

    #[test]
    fn presets_hold_reference_values() {
        let rows = [
            ("hci-dep", 16, 28, 2, 0.001, 24, 20),
            ("hci-indep", 48, 16, 4, 0.001, 128, 15),
            ("deap-dep", 32, 18, 2, 0.001, 128, 20),
            ("deap-indep", 32, 16, 4, 0.0001, 80, 30),
        ];
        for (name, dh, hidden, heads, lr, batch, epochs) in rows {
            let c = TrainConfig::preset(name).unwrap();
            assert_eq!(
                (c.lstm_hidden, c.gat_hidden, c.heads, c.learning_rate, c.batch_size, c.epochs),
                (dh, hidden, heads, lr, batch, epochs),
                "{name}"
            );
            assert_eq!((c.k, c.regions, c.n, c.gat_layers), (10, 9, 32, 4));
        }
        assert!(TrainConfig::preset("nope").is_err());
    }

    #[test]
    fn layering_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, "").unwrap();
        let c = load_config(Some(&path), Some("hci-dep"), &Map::new()).unwrap();
        assert_eq!(c, TrainConfig::preset("hci-dep").unwrap());

        std::fs::write(&path, r#"{"epochs": 7, "batch_size": 3}"#).unwrap();
        let c = load_config(Some(&path), Some("hci-dep"), &obj(json!({"epochs": 5}))).unwrap();
        assert_eq!((c.epochs, c.batch_size, c.gat_hidden), (5, 3, 28));

        std::fs::write(&path, r#"{"epoch": 7, "lr": 1}"#).unwrap();
        match load_config(Some(&path), None, &Map::new()) {
            Err(ConfigError::UnknownKeys(keys)) => assert_eq!(keys, vec!["epoch", "lr"]),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&path, r#"{"schema_version": 2}"#).unwrap();
        assert!(matches!(
            load_config(Some(&path), None, &Map::new()),
            Err(ConfigError::SchemaVersion { found: 2, .. })
        ));
        std::fs::write(&path, r#"{"preset": "deap-indep"}"#).unwrap();
        let c = load_config(Some(&path), None, &Map::new()).unwrap();
        assert_eq!(c, TrainConfig::preset("deap-indep").unwrap());
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = load_config(None, Some("hci-indep"), &obj(json!({"seed": 9, "lambda_override": 0.5})))
            .unwrap();
        let back: Map<String, Value> = obj(serde_json::from_str(&c.to_json()).unwrap());
        let again = TrainConfig::default().overlay(&back).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(TrainConfig::default().overlay(&obj(json!({"heads": 0}))).is_err());
        assert!(TrainConfig::default().overlay(&obj(json!({"learning_rate": -1.0}))).is_err());
        assert!(TrainConfig::default().overlay(&obj(json!({"epochs": "many"}))).is_err());
    }

    #[test]
    fn default_model_shapes() {
        let c = TrainConfig::preset("hci-dep").unwrap();
        let m = c.build_model(4).unwrap();
        assert_eq!(m.config.region_dim, 32);
        assert_eq!(m.config.node_dim, 28);
        assert_eq!(m.regions.len(), 9);
    }
}
