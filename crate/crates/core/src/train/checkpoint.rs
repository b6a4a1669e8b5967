//! `model.json` (configuration echo and parameter registry) plus
//! `model.f64` (all parameters, little-endian, registry order).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::config::TrainConfig;
use crate::model::{Model, ParamInfo};
use crate::signal::dataset::{read_f64_blob, write_f64_blob};
use crate::signal::BandSpec;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;
pub const MODEL_JSON: &str = "model.json";
pub const MODEL_BLOB: &str = "model.f64";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub schema_version: u32,
    pub config: TrainConfig,
    pub bands: Vec<BandSpec>,
    pub channel_names: Vec<String>,
    pub seed: u64,
    pub parameter_count: usize,
    pub parameters: Vec<ParamInfo>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn save_checkpoint(
    dir: &Path,
    model: &Model,
    config: &TrainConfig,
    bands: &[BandSpec],
    channel_names: &[String],
) -> Result<(), TrainError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let meta = CheckpointMeta {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        config: config.clone(),
        bands: bands.to_vec(),
        channel_names: channel_names.to_vec(),
        seed: config.seed,
        parameter_count: model.parameter_count(),
        parameters: model.params.info().to_vec(),
    };
    let path = dir.join(MODEL_JSON);
    let text = serde_json::to_string_pretty(&meta).expect("checkpoint serialises");
    fs::write(&path, text + "\n").map_err(io(&path))?;
    write_f64_blob(&dir.join(MODEL_BLOB), &model.params.flatten())?;
    Ok(())
}

/// Rebuilds the model from the echoed configuration and loads the values.
pub fn load_checkpoint(dir: &Path) -> Result<(Model, CheckpointMeta), TrainError> {
    let path = dir.join(MODEL_JSON);
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| {
        TrainError::Checkpoint(format!("{}: {e}", path.display()))
    })?;
    if meta.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(TrainError::Checkpoint(format!(
            "schema version {} (expected {CHECKPOINT_SCHEMA_VERSION})",
            meta.schema_version
        )));
    }
    let mut model = meta.config.build_model(meta.bands.len())?;
    if model.params.info() != meta.parameters.as_slice() {
        return Err(TrainError::Checkpoint(
            "parameter registry does not match the configuration".into(),
        ));
    }
    let values = read_f64_blob(&dir.join(MODEL_BLOB))?;
    if !model.params.load_flat(&values) {
        return Err(TrainError::Checkpoint(format!(
            "{} holds {} values, registry needs {}",
            MODEL_BLOB,
            values.len(),
            model.parameter_count()
        )));
    }
    Ok((model, meta))
}
