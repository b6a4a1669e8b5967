//! On-disk formats: a raw recording directory (`manifest.json` plus one
//! little-endian `f64` blob per participant) and a feature directory
//! (`features.json` plus `features.f64`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BandSpec, FeatureSample, RawTrial, SignalError};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FEATURES_JSON: &str = "features.json";
pub const FEATURES_BLOB: &str = "features.f64";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialEntry {
    pub trial_id: u32,
    /// Retained `[start, end)` sample window; anything outside (baselines,
    /// discarded lead-in) is dropped on load.
    pub window: [usize; 2],
    pub valence: f64,
    pub arousal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipantEntry {
    pub id: u32,
    pub file: String,
    pub trials: Vec<TrialEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub n_channels: usize,
    pub channel_names: Vec<String>,
    pub sampling_rate_hz: f64,
    pub samples_per_trial: usize,
    pub participants: Vec<ParticipantEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SignalError + '_ {
    move |source| SignalError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, SignalError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| SignalError::Json {
        path: path.display().to_string(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SignalError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn write_f64_blob(path: &Path, values: &[f64]) -> Result<(), SignalError> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_f64_blob(path: &Path) -> Result<Vec<f64>, SignalError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() % 8 != 0 {
        return Err(SignalError::Format(format!(
            "{}: length {} is not a multiple of 8",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn channel_names(n: usize) -> Vec<String> {
    let e = crate::montage::Electrodes::default_32();
    if e.channels.len() == n {
        e.channels
    } else {
        (0..n).map(|c| format!("ch{c}")).collect()
    }
}

/// Writes trials grouped by participant. All trials must share channel
/// count, rate and length.
pub fn write_dataset(dir: &Path, trials: &[RawTrial]) -> Result<Manifest, SignalError> {
    let first = trials
        .first()
        .ok_or_else(|| SignalError::Format("no trials to write".into()))?;
    let (n, len, fs_hz) = (first.channels.len(), first.len(), first.sampling_rate);
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let mut ids: Vec<u32> = trials.iter().map(|t| t.participant).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut participants = Vec::new();
    for id in ids {
        let mine: Vec<&RawTrial> = trials.iter().filter(|t| t.participant == id).collect();
        let mut blob = Vec::with_capacity(mine.len() * n * len);
        let mut entries = Vec::new();
        for t in &mine {
            t.validate()?;
            if t.channels.len() != n || t.len() != len || t.sampling_rate != fs_hz {
                return Err(SignalError::Format(format!(
                    "trial {} of participant {} differs in shape or rate",
                    t.trial, id
                )));
            }
            for ch in &t.channels {
                blob.extend_from_slice(ch);
            }
            entries.push(TrialEntry {
                trial_id: t.trial,
                window: [0, len],
                valence: t.valence,
                arousal: t.arousal,
            });
        }
        let file = format!("p{id:02}.f64");
        write_f64_blob(&dir.join(&file), &blob)?;
        participants.push(ParticipantEntry {
            id,
            file,
            trials: entries,
        });
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        n_channels: n,
        channel_names: channel_names(n),
        sampling_rate_hz: fs_hz,
        samples_per_trial: len,
        participants,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, SignalError> {
    let m: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    if m.schema_version != SCHEMA_VERSION {
        return Err(SignalError::Format(format!(
            "manifest schema version {} (expected {SCHEMA_VERSION})",
            m.schema_version
        )));
    }
    if m.channel_names.len() != m.n_channels {
        return Err(SignalError::Format(format!(
            "{} channel names for {} channels",
            m.channel_names.len(),
            m.n_channels
        )));
    }
    Ok(m)
}

/// Loads every trial, cropped to its retained window.
pub fn read_dataset(dir: &Path) -> Result<(Manifest, Vec<RawTrial>), SignalError> {
    let m = read_manifest(dir)?;
    let (n, len) = (m.n_channels, m.samples_per_trial);
    let mut trials = Vec::new();
    for p in &m.participants {
        let path: PathBuf = dir.join(&p.file);
        let blob = read_f64_blob(&path)?;
        let expected = p.trials.len() * n * len;
        if blob.len() != expected {
            return Err(SignalError::Format(format!(
                "{}: {} values, expected {} ({} trials x {} channels x {} points)",
                path.display(),
                blob.len(),
                expected,
                p.trials.len(),
                n,
                len
            )));
        }
        for (i, t) in p.trials.iter().enumerate() {
            let [start, end] = t.window;
            if start >= end || end > len {
                return Err(SignalError::Format(format!(
                    "participant {} trial {}: window [{start}, {end}) outside 0..{len}",
                    p.id, t.trial_id
                )));
            }
            let base = i * n * len;
            let channels = (0..n)
                .map(|c| blob[base + c * len + start..base + c * len + end].to_vec())
                .collect();
            let trial = RawTrial {
                participant: p.id,
                trial: t.trial_id,
                channels,
                sampling_rate: m.sampling_rate_hz,
                valence: t.valence,
                arousal: t.arousal,
            };
            trial.validate()?;
            trials.push(trial);
        }
    }
    Ok((m, trials))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub participant: u32,
    pub trial: u32,
    pub sample_index: u32,
    pub valence: u8,
    pub arousal: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureManifest {
    pub schema_version: u32,
    pub n: usize,
    pub k: usize,
    pub d_b: usize,
    pub bands: Vec<BandSpec>,
    pub channel_names: Vec<String>,
    pub sample_count: usize,
    pub samples: Vec<SampleEntry>,
}

/// A loaded feature directory.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub bands: Vec<BandSpec>,
    pub channel_names: Vec<String>,
    pub samples: Vec<FeatureSample>,
}

impl FeatureSet {
    pub fn n(&self) -> usize {
        self.samples.first().map_or(self.channel_names.len(), |s| s.n)
    }

    pub fn k(&self) -> usize {
        self.samples.first().map_or(0, |s| s.k)
    }

    pub fn d_b(&self) -> usize {
        self.bands.len()
    }

    pub fn participants(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.samples.iter().map(|s| s.participant).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Keeps the named bands only.
    pub fn select_bands(&self, names: &[String]) -> Result<FeatureSet, SignalError> {
        let idx = names
            .iter()
            .map(|name| {
                self.bands
                    .iter()
                    .position(|b| &b.name == name)
                    .ok_or_else(|| SignalError::UnknownBand(name.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FeatureSet {
            bands: idx.iter().map(|&i| self.bands[i].clone()).collect(),
            channel_names: self.channel_names.clone(),
            samples: self.samples.iter().map(|s| s.select_bands(&idx)).collect(),
        })
    }
}

pub fn write_features(dir: &Path, set: &FeatureSet) -> Result<(), SignalError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let (n, k, d) = (set.n(), set.k(), set.d_b());
    let mut blob = Vec::with_capacity(set.samples.len() * n * k * d);
    let mut entries = Vec::with_capacity(set.samples.len());
    for s in &set.samples {
        if (s.n, s.k, s.bands) != (n, k, d) {
            return Err(SignalError::Format(format!(
                "sample shape {}x{}x{} differs from {n}x{k}x{d}",
                s.n, s.k, s.bands
            )));
        }
        blob.extend_from_slice(&s.x);
        entries.push(SampleEntry {
            participant: s.participant,
            trial: s.trial,
            sample_index: s.sample_index,
            valence: s.valence,
            arousal: s.arousal,
        });
    }
    write_f64_blob(&dir.join(FEATURES_BLOB), &blob)?;
    write_json(
        &dir.join(FEATURES_JSON),
        &FeatureManifest {
            schema_version: SCHEMA_VERSION,
            n,
            k,
            d_b: d,
            bands: set.bands.clone(),
            channel_names: set.channel_names.clone(),
            sample_count: entries.len(),
            samples: entries,
        },
    )
}

pub fn read_features(dir: &Path) -> Result<FeatureSet, SignalError> {
    let m: FeatureManifest = read_json(&dir.join(FEATURES_JSON))?;
    if m.schema_version != SCHEMA_VERSION {
        return Err(SignalError::Format(format!(
            "features schema version {} (expected {SCHEMA_VERSION})",
            m.schema_version
        )));
    }
    if m.samples.len() != m.sample_count || m.bands.len() != m.d_b {
        return Err(SignalError::Format(
            "features.json counts disagree with its tables".into(),
        ));
    }
    let blob = read_f64_blob(&dir.join(FEATURES_BLOB))?;
    let per = m.n * m.k * m.d_b;
    if blob.len() != per * m.sample_count {
        return Err(SignalError::Format(format!(
            "features.f64 holds {} values, expected {}",
            blob.len(),
            per * m.sample_count
        )));
    }
    let samples = m
        .samples
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let x = blob[i * per..(i + 1) * per].to_vec();
            if x.iter().any(|v| !v.is_finite()) {
                return Err(SignalError::Format(format!("sample {i} has non-finite values")));
            }
            for label in [e.valence, e.arousal] {
                if label > 1 {
                    return Err(SignalError::Format(format!("sample {i} label {label}")));
                }
            }
            Ok(FeatureSample {
                n: m.n,
                k: m.k,
                bands: m.d_b,
                x,
                valence: e.valence,
                arousal: e.arousal,
                participant: e.participant,
                trial: e.trial,
                sample_index: e.sample_index,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FeatureSet {
        bands: m.bands,
        channel_names: m.channel_names,
        samples,
    })
}
