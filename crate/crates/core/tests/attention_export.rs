mod common;

use std::collections::BTreeMap;
use std::fs;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use ltsgat::autodiff::Matrix;
use ltsgat::eval::{export_attention, REGIONS_CSV, TEMPORAL_CSV};
use ltsgat::signal::FeatureSample;

fn samples(rng: &mut ChaCha8Rng) -> Vec<FeatureSample> {
    (0..5u32)
        .map(|i| {
            let mut s = common::random_sample(4, 3, 2, 2.0, 0, rng);
            s.participant = i % 2;
            s.trial = i;
            s
        })
        .collect()
}

/// Importance column of the `sample` rows, grouped by (participant, trial).
fn per_sample(csv: &str) -> BTreeMap<(String, String), Vec<f64>> {
    let mut out: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[0] == "sample" {
            out.entry((f[1].into(), f[2].into())).or_default().push(f[5].parse().unwrap());
        }
    }
    out
}

#[test]
fn exported_importances_sum_to_segment_and_region_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = common::tiny_config();
    let model = cfg.build_model(2).unwrap();
    let data = samples(&mut rng);
    let refs: Vec<&FeatureSample> = data.iter().collect();
    let tmp = TempDir::new().unwrap();
    let report = export_attention(&model, &refs, tmp.path()).unwrap();

    let temporal = fs::read_to_string(tmp.path().join(TEMPORAL_CSV)).unwrap();
    let regions = fs::read_to_string(tmp.path().join(REGIONS_CSV)).unwrap();
    assert_eq!(temporal.lines().next().unwrap(), "kind,participant,trial,sample,index,importance");
    let t = per_sample(&temporal);
    let r = per_sample(&regions);
    assert_eq!(t.len(), 5);
    for v in t.values() {
        assert_eq!(v.len(), 3);
        assert!((v.iter().sum::<f64>() - 3.0).abs() < 1e-9);
    }
    for v in r.values() {
        assert_eq!(v.len(), 3);
        assert!((v.iter().sum::<f64>() - 3.0).abs() < 1e-9);
    }
    // 5 samples, 2 participant means, 1 overall mean, 3 entries each.
    assert_eq!(temporal.lines().count(), 1 + (5 + 2 + 1) * 3);
    let overall: Vec<f64> = (0..3)
        .map(|j| report.temporal.iter().map(|row| row[j]).sum::<f64>() / 5.0)
        .collect();
    for (a, b) in overall.iter().zip(&report.temporal_mean) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn zero_parameters_give_uniform_importance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = common::tiny_config();
    let mut model = cfg.build_model(2).unwrap();
    for v in model.params.values_mut() {
        *v = Matrix::zeros(v.rows(), v.cols());
    }
    let data = samples(&mut rng);
    let refs: Vec<&FeatureSample> = data.iter().collect();
    let tmp = TempDir::new().unwrap();
    let report = export_attention(&model, &refs, tmp.path()).unwrap();
    for row in report.temporal.iter().chain(&report.regions) {
        for v in row {
            assert!((v - 1.0).abs() < 1e-12, "{row:?}");
        }
    }
}

#[test]
fn disabled_modules_export_header_only_tables() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut cfg = common::tiny_config();
    cfg.disable_temporal = true;
    cfg.disable_spatial = true;
    let model = cfg.build_model(2).unwrap();
    let data = samples(&mut rng);
    let refs: Vec<&FeatureSample> = data.iter().collect();
    let tmp = TempDir::new().unwrap();
    export_attention(&model, &refs, tmp.path()).unwrap();
    for name in [TEMPORAL_CSV, REGIONS_CSV] {
        let text = fs::read_to_string(tmp.path().join(name)).unwrap();
        assert_eq!(text.lines().count(), 1, "{name}");
    }
}
