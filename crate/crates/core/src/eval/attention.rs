use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::EvalError;
use crate::model::spatial::region_importance;
use crate::model::temporal::temporal_importance;
use crate::model::Model;
use crate::signal::FeatureSample;

pub const TEMPORAL_CSV: &str = "temporal.csv";
pub const REGIONS_CSV: &str = "regions.csv";

/// Importance scores read off the attention weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionReport {
    /// `(participant, trial, sample_index)` of each row below.
    pub samples: Vec<(u32, u32, u32)>,
    /// Per sample, `k` segment scores averaged over bands; each sums to `k`.
    /// Empty when the model has no temporal attention.
    pub temporal: Vec<Vec<f64>>,
    pub temporal_mean: Vec<f64>,
    pub region_names: Vec<String>,
    /// Per sample, one score per region; each sums to the region count.
    pub regions: Vec<Vec<f64>>,
    pub region_mean: Vec<f64>,
}

fn mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let mut out = vec![0.0; first.len()];
    for r in rows {
        for (o, v) in out.iter_mut().zip(r) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= rows.len() as f64);
    out
}

impl AttentionReport {
    pub fn from_model(model: &Model, samples: &[&FeatureSample]) -> Result<Self, EvalError> {
        let values = model.attention(samples)?;
        let mut temporal = Vec::new();
        let mut regions = Vec::new();
        for v in &values {
            if !v.temporal.is_empty() {
                let per_band: Vec<Vec<f64>> = v.temporal.iter().map(temporal_importance).collect();
                temporal.push(mean_rows(&per_band));
            }
            if let Some(w) = &v.region {
                regions.push(region_importance(w));
            }
        }
        Ok(Self {
            samples: samples
                .iter()
                .map(|s| (s.participant, s.trial, s.sample_index))
                .collect(),
            temporal_mean: mean_rows(&temporal),
            temporal,
            region_names: if regions.is_empty() { Vec::new() } else { model.regions.names() },
            region_mean: mean_rows(&regions),
            regions,
        })
    }

    /// `kind,participant,trial,sample,index,importance` rows: every sample,
    /// then each participant's mean, then the mean over all samples.
    fn table(&self, rows: &[Vec<f64>], mean: &[f64], label: impl Fn(usize) -> String) -> String {
        let mut out = String::from("kind,participant,trial,sample,index,importance\n");
        if rows.is_empty() {
            return out;
        }
        let mut groups: BTreeMap<u32, Vec<Vec<f64>>> = BTreeMap::new();
        for (row, &(p, t, s)) in rows.iter().zip(&self.samples) {
            for (i, v) in row.iter().enumerate() {
                let _ = writeln!(out, "sample,{p},{t},{s},{},{v}", label(i));
            }
            groups.entry(p).or_default().push(row.clone());
        }
        for (p, group) in &groups {
            for (i, v) in mean_rows(group).iter().enumerate() {
                let _ = writeln!(out, "participant,{p},,,{},{v}", label(i));
            }
        }
        for (i, v) in mean.iter().enumerate() {
            let _ = writeln!(out, "mean,all,,,{},{v}", label(i));
        }
        out
    }

    pub fn temporal_csv(&self) -> String {
        self.table(&self.temporal, &self.temporal_mean, |i| i.to_string())
    }

    pub fn regions_csv(&self) -> String {
        self.table(&self.regions, &self.region_mean, |i| self.region_names[i].clone())
    }
}

/// Computes the report and writes `temporal.csv` and `regions.csv` into
/// `dir`. A disabled module yields a header-only file.
pub fn export_attention(
    model: &Model,
    samples: &[&FeatureSample],
    dir: &Path,
) -> Result<AttentionReport, EvalError> {
    let report = AttentionReport::from_model(model, samples)?;
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| EvalError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    for (name, body) in [
        (TEMPORAL_CSV, report.temporal_csv()),
        (REGIONS_CSV, report.regions_csv()),
    ] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(io(&path))?;
    }
    Ok(report)
}
