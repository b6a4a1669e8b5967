use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::{json, Map, Value};

use ltsgat::autodiff::check_primitives;
use ltsgat::config::{load_config, TrainConfig, CONFIG_SCHEMA_VERSION};
use ltsgat::eval::{evaluate, export_attention, run_protocol, Paradigm, Variant};
use ltsgat::signal::dataset::{read_dataset, read_features, write_dataset, write_features, FeatureSet};
use ltsgat::signal::{
    downsample, extract_features, gen_synthetic, BandSpec, Dimension, FeatureSample, Standardizer,
    SynthConfig,
};
use ltsgat::train::{check_end_to_end, load_checkpoint, save_checkpoint, train, CheckpointMeta};

use crate::error::CliError;

pub const CONFIG_ECHO: &str = "config.json";
pub const STANDARDIZER_JSON: &str = "standardizer.json";

/// Flags that resolve a training configuration. Precedence runs preset,
/// then `--config`, then the individual flags.
#[derive(Args, Debug, Default)]
pub struct ConfigArgs {
    /// Hyper-parameter preset: hci-dep, hci-indep, deap-dep, deap-indep or custom.
    #[arg(long)]
    pub preset: Option<String>,
    /// JSON configuration file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// valence or arousal.
    #[arg(long)]
    pub dimension: Option<String>,
    /// Comma-separated band names.
    #[arg(long, value_delimiter = ',')]
    pub bands: Option<Vec<String>>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub disable_temporal: bool,
    #[arg(long)]
    pub disable_spatial: bool,
    #[arg(long)]
    pub disable_domain_adaptation: bool,
    /// Any other configuration key, as KEY=JSON (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> Result<Map<String, Value>, CliError> {
        let mut m = Map::new();
        if let Some(v) = self.seed {
            m.insert("seed".into(), json!(v));
        }
        if let Some(v) = self.epochs {
            m.insert("epochs".into(), json!(v));
        }
        if let Some(v) = self.batch_size {
            m.insert("batch_size".into(), json!(v));
        }
        if let Some(v) = self.learning_rate {
            m.insert("learning_rate".into(), json!(v));
        }
        if let Some(v) = &self.dimension {
            m.insert("dimension".into(), json!(v));
        }
        if let Some(v) = &self.bands {
            m.insert("bands".into(), json!(v));
        }
        if let Some(v) = self.folds {
            m.insert("folds".into(), json!(v));
        }
        for (flag, key) in [
            (self.disable_temporal, "disable_temporal"),
            (self.disable_spatial, "disable_spatial"),
            (self.disable_domain_adaptation, "disable_domain_adaptation"),
        ] {
            if flag {
                m.insert(key.into(), json!(true));
            }
        }
        for item in &self.set {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{item}`")))?;
            // Bare words are taken as strings so `--set preset=hci-dep` works.
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()));
            m.insert(key.trim().into(), value);
        }
        Ok(m)
    }

    pub fn resolve(&self) -> Result<TrainConfig, CliError> {
        let cfg = load_config(self.config.as_deref(), self.preset.as_deref(), &self.overrides()?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("json serialises") + "\n"))
}

fn echo_config(dir: &Path, cfg: &TrainConfig) -> Result<(), CliError> {
    write_text(&dir.join(CONFIG_ECHO), &(cfg.to_json() + "\n"))
}

/// Loads features and keeps the configured bands, checking that the shape
/// agrees with the model configuration.
fn load_features(dir: &Path, cfg: &TrainConfig) -> Result<FeatureSet, CliError> {
    let set = read_features(dir)?.select_bands(&cfg.bands)?;
    if set.n() != cfg.n || set.k() != cfg.k {
        return Err(ltsgat::config::ConfigError::Invalid(format!(
            "features have n={} k={}, configuration expects n={} k={}",
            set.n(),
            set.k(),
            cfg.n,
            cfg.k
        ))
        .into());
    }
    Ok(set)
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub participants: u32,
    #[arg(long, default_value_t = 20)]
    pub trials: u32,
    /// Relative power boost of the planted class-1 pattern.
    #[arg(long, default_value_t = 1.0)]
    pub separation: f64,
    /// Log-standard-deviation of per-participant channel gains.
    #[arg(long, default_value_t = 0.0)]
    pub domain_shift: f64,
    #[arg(long, default_value_t = 60.0)]
    pub duration_s: f64,
    #[arg(long, default_value_t = 128.0)]
    pub sampling_rate: f64,
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let cfg = SynthConfig {
        seed: args.seed,
        participants: args.participants,
        trials: args.trials,
        separation: args.separation,
        domain_shift: args.domain_shift,
        duration_s: args.duration_s,
        sampling_rate: args.sampling_rate,
        ..SynthConfig::default()
    };
    cfg.validate()?;
    let trials = gen_synthetic(&cfg)?;
    let manifest = write_dataset(&args.out, &trials)?;
    write_json(
        &args.out.join("synth.json"),
        &json!({ "schema_version": manifest.schema_version, "synth": cfg }),
    )?;
    log::info!(
        "wrote {} trials from {} participants to {}",
        trials.len(),
        manifest.participants.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// Raw dataset directory (manifest.json plus per-participant blobs).
    #[arg(long)]
    pub data: PathBuf,
    /// Output feature directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Segments per sample.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 3)]
    pub samples_per_trial: usize,
    #[arg(long, value_delimiter = ',', default_value = "theta,alpha,beta,gamma")]
    pub bands: Vec<String>,
    /// Recordings above this rate are downsampled to it first.
    #[arg(long, default_value_t = 128.0)]
    pub target_rate: f64,
    /// Binarize ratings with `>= 5` as high instead of `> 5`.
    #[arg(long)]
    pub rating_threshold_exclusive: bool,
}

pub fn extract(args: &ExtractArgs) -> Result<(), CliError> {
    let bands = args
        .bands
        .iter()
        .map(|b| BandSpec::by_name(b))
        .collect::<Result<Vec<_>, _>>()?;
    let (manifest, trials) = read_dataset(&args.data)?;
    let inclusive = !args.rating_threshold_exclusive;
    let mut samples: Vec<FeatureSample> = Vec::new();
    for trial in &trials {
        let trial = if trial.sampling_rate > args.target_rate {
            downsample(trial, args.target_rate)?
        } else {
            trial.clone()
        };
        samples.extend(extract_features(&trial, &bands, args.k, args.samples_per_trial, inclusive)?);
    }
    let set = FeatureSet {
        bands: bands.clone(),
        channel_names: manifest.channel_names.clone(),
        samples,
    };
    write_features(&args.out, &set)?;
    write_json(
        &args.out.join("extract.json"),
        &json!({
            "schema_version": manifest.schema_version,
            "source": args.data.display().to_string(),
            "k": args.k,
            "samples_per_trial": args.samples_per_trial,
            "bands": bands,
            "target_rate": args.target_rate,
            "rating_threshold_inclusive": inclusive,
        }),
    )?;
    log::info!("extracted {} samples from {} trials", set.samples.len(), trials.len());
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Labelled feature directory.
    #[arg(long)]
    pub features: PathBuf,
    /// Unlabelled target-domain features for domain adaptation.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Output checkpoint directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn train_cmd(args: &TrainArgs) -> Result<(), CliError> {
    let cfg = args.config.resolve()?;
    let set = load_features(&args.features, &cfg)?;
    let raw: Vec<&FeatureSample> = set.samples.iter().collect();
    let standardizer = Standardizer::fit(&raw)?;
    let source: Vec<FeatureSample> = raw.iter().map(|s| standardizer.apply(s)).collect();
    let target: Vec<FeatureSample> = match &args.target {
        Some(dir) => load_features(dir, &cfg)?
            .samples
            .iter()
            .map(|s| standardizer.apply(s))
            .collect(),
        None => Vec::new(),
    };
    let model = cfg.build_model(set.d_b())?;
    log::info!(
        "training {} parameters on {} samples ({} target)",
        model.parameter_count(),
        source.len(),
        target.len()
    );
    let source_refs: Vec<&FeatureSample> = source.iter().collect();
    let target_refs: Vec<&FeatureSample> = target.iter().collect();
    let (model, history) = train(model, &source_refs, &target_refs, &cfg)?;
    if let Some(last) = history.records.last() {
        log::info!(
            "epoch {}: classification loss {:.4}, source accuracy {:.3}",
            last.epoch,
            last.class_loss,
            last.source_accuracy
        );
    }
    save_checkpoint(&args.out, &model, &cfg, &set.bands, &set.channel_names)?;
    write_text(&args.out.join("history.csv"), &history.to_csv())?;
    write_json(
        &args.out.join(STANDARDIZER_JSON),
        &json!({ "schema_version": CONFIG_SCHEMA_VERSION, "standardizer": standardizer }),
    )?;
    echo_config(&args.out, &cfg)
}

/// A checkpoint plus the features it should be applied to, standardized
/// with the statistics saved at training time.
fn checkpoint_inputs(
    checkpoint: &Path,
    features: &Path,
) -> Result<(ltsgat::model::Model, CheckpointMeta, Vec<FeatureSample>), CliError> {
    let (model, meta) = load_checkpoint(checkpoint)?;
    let path = checkpoint.join(STANDARDIZER_JSON);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| ltsgat::signal::SignalError::Format(format!("{}: {e}", path.display())))?;
    let standardizer: Standardizer = serde_json::from_value(value["standardizer"].clone())
        .map_err(|e| ltsgat::signal::SignalError::Format(format!("{}: {e}", path.display())))?;
    let set = load_features(features, &meta.config)?;
    let samples = set.samples.iter().map(|s| standardizer.apply(s)).collect();
    Ok((model, meta, samples))
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Output directory for metrics.json.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let (model, meta, samples) = checkpoint_inputs(&args.checkpoint, &args.features)?;
    let refs: Vec<&FeatureSample> = samples.iter().collect();
    let dimension = meta.config.dimension;
    let metrics = evaluate(&model, &refs, dimension)?;
    log::info!("{}: accuracy {:.4} on {} samples", dimension.name(), metrics.accuracy, refs.len());
    write_json(
        &args.out.join("metrics.json"),
        &json!({
            "schema_version": CONFIG_SCHEMA_VERSION,
            "dimension": dimension,
            "samples": refs.len(),
            "metrics": metrics,
        }),
    )?;
    echo_config(&args.out, &meta.config)
}

#[derive(Args, Debug)]
pub struct CvArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// Output directory for summary.csv and failures.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Ablation variant: GAT, LT-GAT, LS-GAT, LTS-GAT or -DA.
    #[arg(long, allow_hyphen_values = true)]
    pub variant: Option<String>,
    /// Evaluate valence and arousal instead of the configured dimension.
    #[arg(long)]
    pub all_dimensions: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn cross_validate(args: &CvArgs, paradigm: Paradigm) -> Result<(), CliError> {
    let mut cfg = args.config.resolve()?;
    if let Some(name) = &args.variant {
        cfg = name.parse::<Variant>()?.apply(&cfg);
    }
    let set = load_features(&args.features, &cfg)?;
    let dimensions = if args.all_dimensions {
        vec![Dimension::Valence, Dimension::Arousal]
    } else {
        vec![cfg.dimension]
    };
    let report = run_protocol(&set, paradigm, &cfg, &dimensions)?;
    write_text(&args.out.join("summary.csv"), &report.summary_csv())?;
    let failures: Vec<Value> = report
        .failures
        .iter()
        .map(|f| {
            json!({
                "dimension": f.dimension,
                "fold": f.fold,
                "participant": f.participant,
                "error": f.error,
            })
        })
        .collect();
    write_json(&args.out.join("failures.json"), &Value::Array(failures))?;
    echo_config(&args.out, &cfg)?;
    for &dim in &dimensions {
        if let Some([acc, f1, macro_f1]) = report.summary(dim) {
            log::info!(
                "{} {}: accuracy {acc:.4}, f1 {f1:.4}, macro f1 {macro_f1:.4}",
                paradigm.name(),
                dim.name()
            );
        }
    }
    if !report.failures.is_empty() {
        return Err(CliError::FoldFailures {
            failed: report.failures.len(),
            total: report.failures.len() + report.results.len(),
        });
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Output directory for temporal.csv and regions.csv.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn export(args: &ExportArgs) -> Result<(), CliError> {
    let (model, meta, samples) = checkpoint_inputs(&args.checkpoint, &args.features)?;
    let refs: Vec<&FeatureSample> = samples.iter().collect();
    export_attention(&model, &refs, &args.out)?;
    log::info!("exported attention for {} samples to {}", refs.len(), args.out.display());
    echo_config(&args.out, &meta.config)
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Tolerance for single primitives.
    #[arg(long, default_value_t = 1e-4)]
    pub primitive_tol: f64,
    /// Tolerance for the whole-network loss.
    #[arg(long, default_value_t = 1e-3)]
    pub model_tol: f64,
    /// Optional JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<(), CliError> {
    let primitives = check_primitives(args.seed, args.primitive_tol)
        .map_err(|e| CliError::GradCheck(e.to_string()))?;
    let model = check_end_to_end(args.seed, args.model_tol)?;
    let mut failed: Vec<String> = Vec::new();
    for r in primitives.iter().chain(std::iter::once(&model.report)) {
        let verdict = if r.pass { "pass" } else { "FAIL" };
        println!("{:<16} max relative error {:.2e}  {verdict}", r.op_name, r.max_relative_error);
        if !r.pass {
            failed.push(r.op_name.clone());
        }
    }
    let (offenders, largest) = model.offenders(args.model_tol);
    if offenders > 0 {
        println!("model: {offenders} entries over tolerance, largest |gradient| among them {largest:.1e}");
    }
    if let Some(path) = &args.out {
        write_json(
            path,
            &json!({
                "seed": args.seed,
                "primitives": primitives,
                "model": model.report,
                "model_offenders": offenders,
                "model_largest_offending_gradient": largest,
            }),
        )?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::GradCheck(failed.join(", ")))
    }
}
