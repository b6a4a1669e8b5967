use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ltsgat::config::TrainConfig;
use serde_json::Value;
use tempfile::TempDir;

fn ltsgat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ltsgat"))
        .args(args)
        .env("LTSGAT_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small synthetic feature directory: 2 participants x 6 trials of 30 s.
fn features(tmp: &TempDir) -> PathBuf {
    let raw = tmp.path().join("raw");
    let feat = tmp.path().join("feat");
    let out = ltsgat(&[
        "synth", "--out", s(&raw), "--participants", "2", "--trials", "6", "--duration-s", "30",
        "--seed", "5",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = ltsgat(&["extract", "--data", s(&raw), "--out", s(&feat)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    feat
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn unknown_subcommand_and_flag_are_usage_errors() {
    let out = ltsgat(&["frobnicate"]);
    assert_eq!(code(&out), 64);
    assert!(stderr(&out).contains("Usage"));
    let out = ltsgat(&["gradcheck", "--no-such-flag"]);
    assert_eq!(code(&out), 64);
    assert_eq!(code(&ltsgat(&["--help"])), 0);
}

#[test]
fn unknown_config_key_is_rejected_by_name() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"epochs": 3, "dropout": 0.5}"#).unwrap();
    let out = ltsgat(&[
        "train", "--features", "unused", "--out", s(&tmp.path().join("o")), "--config", s(&cfg),
    ]);
    assert_eq!(code(&out), 78);
    assert!(stderr(&out).contains("dropout"), "{}", stderr(&out));

    let out = ltsgat(&["train", "--features", "unused", "--out", "o", "--preset", "imagenet"]);
    assert_eq!(code(&out), 78);
}

#[test]
fn missing_or_corrupt_data_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let out = ltsgat(&["extract", "--data", s(&tmp.path().join("nothing")), "--out", "x"]);
    assert_eq!(code(&out), 3);

    let feat = features(&tmp);
    fs::write(feat.join("features.json"), "{ not json").unwrap();
    let out = ltsgat(&["cv-dependent", "--features", s(&feat), "--out", s(&tmp.path().join("cv"))]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn logs_are_json_lines_on_stderr() {
    let tmp = TempDir::new().unwrap();
    let raw = tmp.path().join("raw");
    let out = ltsgat(&["synth", "--out", s(&raw), "--participants", "1", "--trials", "2", "--duration-s", "30"]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
    let text = stderr(&out);
    assert!(!text.trim().is_empty());
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).expect("each line is a JSON record");
        for key in ["timestamp", "level", "module", "message"] {
            assert!(v.get(key).is_some(), "missing {key} in {line}");
        }
    }
}

#[test]
fn preset_with_epoch_override_keeps_other_preset_values() {
    let tmp = TempDir::new().unwrap();
    let feat = features(&tmp);
    let ck = tmp.path().join("ck");
    let out = ltsgat(&[
        "train", "--preset", "hci-dep", "--epochs", "5", "--features", s(&feat), "--out", s(&ck),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let meta = read_json(&ck.join("model.json"));
    let echoed: TrainConfig = serde_json::from_value(meta["config"].clone()).unwrap();
    let mut expected = TrainConfig::preset("hci-dep").unwrap();
    expected.epochs = 5;
    assert_eq!(echoed, expected);
    assert_eq!(meta["schema_version"], 1);
    let history = fs::read_to_string(ck.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 5);
    assert!(ck.join("model.f64").exists() && ck.join("standardizer.json").exists());
}

#[test]
fn empty_config_file_yields_the_preset_exactly() {
    let tmp = TempDir::new().unwrap();
    let feat = features(&tmp);
    let cfg = tmp.path().join("empty.json");
    fs::write(&cfg, "").unwrap();
    let out_dir = tmp.path().join("ck");
    let out = ltsgat(&[
        "train", "--preset", "deap-indep", "--config", s(&cfg), "--set", "epochs=1",
        "--features", s(&feat), "--out", s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let echoed: TrainConfig = serde_json::from_str(&fs::read_to_string(out_dir.join("config.json")).unwrap()).unwrap();
    let mut expected = TrainConfig::preset("deap-indep").unwrap();
    expected.epochs = 1;
    assert_eq!(echoed, expected);
}

#[test]
fn rerunning_from_the_echoed_config_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let feat = features(&tmp);
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    let out = ltsgat(&[
        "train", "--preset", "hci-dep", "--epochs", "2", "--seed", "11", "--features", s(&feat), "--out",
        s(&first),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = ltsgat(&[
        "train", "--config", s(&first.join("config.json")), "--features", s(&feat), "--out", s(&second),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for name in ["model.json", "model.f64", "history.csv", "standardizer.json", "config.json"] {
        assert_eq!(
            fs::read(first.join(name)).unwrap(),
            fs::read(second.join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn eval_and_export_read_a_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let feat = features(&tmp);
    let ck = tmp.path().join("ck");
    let out = ltsgat(&["train", "--epochs", "2", "--features", s(&feat), "--out", s(&ck)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let ev = tmp.path().join("ev");
    let out = ltsgat(&["eval", "--checkpoint", s(&ck), "--features", s(&feat), "--out", s(&ev)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let metrics = read_json(&ev.join("metrics.json"));
    assert_eq!(metrics["samples"], 36);
    let c = &metrics["metrics"]["confusion"];
    let total: u64 = ["tp", "fp", "tn", "fn"].iter().map(|k| c[k].as_u64().unwrap()).sum();
    assert_eq!(total, 36);

    let att = tmp.path().join("att");
    let out = ltsgat(&["export-attention", "--checkpoint", s(&ck), "--features", s(&feat), "--out", s(&att)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let temporal = fs::read_to_string(att.join("temporal.csv")).unwrap();
    // 36 samples x 10 segments, 2 participant means and one overall mean.
    assert_eq!(temporal.lines().count(), 1 + 36 * 10 + 2 * 10 + 10);
    assert!(att.join("regions.csv").exists() && att.join("config.json").exists());
}

#[test]
fn cross_validation_writes_summary_and_config() {
    let tmp = TempDir::new().unwrap();
    let feat = features(&tmp);
    let cv = tmp.path().join("cv");
    let out = ltsgat(&[
        "cv-dependent", "--features", s(&feat), "--out", s(&cv), "--folds", "3", "--epochs", "1",
        "--all-dimensions",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = fs::read_to_string(cv.join("summary.csv")).unwrap();
    // Per dimension: 6 folds, 2 participant means, 1 overall mean.
    assert_eq!(summary.lines().count(), 1 + 2 * (6 + 2 + 1));
    assert_eq!(read_json(&cv.join("failures.json")), Value::Array(vec![]));

    let cv = tmp.path().join("cvi");
    let out = ltsgat(&[
        "cv-independent", "--features", s(&feat), "--out", s(&cv), "--epochs", "1", "--variant", "LT-GAT",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let echoed: TrainConfig = serde_json::from_str(&fs::read_to_string(cv.join("config.json")).unwrap()).unwrap();
    assert!(!echoed.disable_temporal && echoed.disable_spatial);
    let summary = fs::read_to_string(cv.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 + 1);

    let out = ltsgat(&["cv-independent", "--features", s(&feat), "--out", s(&cv), "--variant", "XL-GAT"]);
    assert_eq!(code(&out), 64);
}

#[test]
fn failing_folds_give_exit_status_two() {
    let tmp = TempDir::new().unwrap();
    let feat = features(&tmp);
    let cv = tmp.path().join("cv");
    let out = ltsgat(&[
        "cv-independent", "--features", s(&feat), "--out", s(&cv), "--epochs", "1", "--learning-rate",
        "1e300",
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let failures = read_json(&cv.join("failures.json"));
    assert_eq!(failures.as_array().unwrap().len(), 2);
}

#[test]
fn gradcheck_lists_every_check_and_exit_status_follows_the_verdicts() {
    let tmp = TempDir::new().unwrap();
    let report = tmp.path().join("gc.json");
    let out = ltsgat(&["gradcheck", "--seed", "7", "--out", s(&report)]);
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    let verdicts: Vec<&str> = stdout
        .lines()
        .filter(|l| l.contains("max relative error"))
        .map(|l| l.split_whitespace().last().unwrap())
        .collect();
    let v = read_json(&report);
    let primitives = v["primitives"].as_array().unwrap();
    assert_eq!(verdicts.len(), primitives.len() + 1);
    // Every single primitive passes; the whole-model check is reported last.
    assert!(verdicts[..primitives.len()].iter().all(|&x| x == "pass"), "{stdout}");
    let all_pass = verdicts.iter().all(|&x| x == "pass");
    assert_eq!(code(&out), if all_pass { 0 } else { 1 });
}
