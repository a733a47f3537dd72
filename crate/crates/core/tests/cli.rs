mod common;

use common::{assert_schema, cli, cli_ok, manifest_sans_time};
use lidar_units::io::{sha256_file, Manifest};
use lidar_units::units::UnitSet;

#[test]
fn full_pipeline_outputs_match_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    cli_ok(d, &["synth", "--seed", "5", "--out", "scene"]);
    assert_schema("calib.schema.json", &d.join("scene/calib.json"));
    assert_schema("objects.schema.json", &d.join("scene/objects.json"));
    assert_schema("manifest.schema.json", &d.join("scene/manifest.json"));

    cli_ok(d, &["ground", "--cloud", "scene/cloud.bin", "--out", "mask.bin"]);
    assert_schema("manifest.schema.json", &d.join("mask.bin.manifest.json"));

    cli_ok(d, &["units", "--scene", "scene", "--mask", "mask.bin", "--out", "units.json"]);
    assert_schema("unit_set.schema.json", &d.join("units.json"));
    let units: UnitSet = serde_json::from_slice(&std::fs::read(d.join("units.json")).unwrap()).unwrap();
    assert!(units.len() >= 2 && units.len() <= 64, "B = {}", units.len());

    let report = cli_ok(d, &["pairs", "--units", "units.json", "--labels", "scene/labels.bin", "--out", "sets.json"]);
    assert_schema("negative_sets.schema.json", &d.join("sets.json"));
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(report["budget"], units.len() / 2);
    assert!(report["same_class_fraction"].as_f64().unwrap() < report["uniform_expectation"].as_f64().unwrap());

    // unit image features against themselves with the computed sets
    let rows: Vec<Vec<f64>> = units.units.iter().map(|u| u.image_feature.clone()).collect();
    std::fs::write(d.join("img.json"), serde_json::to_vec(&rows).unwrap()).unwrap();
    cli_ok(d, &["loss", "--point", "img.json", "--image", "img.json", "--sets", "sets.json", "--out", "loss.json"]);
    assert_schema("loss.schema.json", &d.join("loss.json"));

    cli_ok(d, &["pretrain", "--mode", "single", "--steps", "5", "--out", "run"]);
    for line in std::fs::read_to_string(d.join("run/trace.jsonl")).unwrap().lines().enumerate() {
        let path = d.join(format!("line{}.json", line.0));
        std::fs::write(&path, line.1).unwrap();
        assert_schema("step_record.schema.json", &path);
    }
    assert_schema("run_summary.schema.json", &d.join("run/summary.json"));
    assert_schema("manifest.schema.json", &d.join("run/manifest.json"));

    cli_ok(d, &["report", "--trace", "run/trace.jsonl", "--out", "report.csv"]);
    let csv = std::fs::read_to_string(d.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.starts_with("run,step,loss,contrastive_accuracy,alignment_score,units\n"));

    for m in ["scene/manifest.json", "units.json.manifest.json", "run/manifest.json", "report.csv.manifest.json"] {
        let man: Manifest = serde_json::from_slice(&std::fs::read(d.join(m)).unwrap()).unwrap();
        assert!(!man.outputs.is_empty());
        // paths are recorded as given, relative to the working directory
        for f in man.inputs.iter().chain(&man.outputs) {
            assert_eq!(sha256_file(d.join(&f.path)).unwrap(), f.sha256, "{}", f.path);
        }
    }
}

#[test]
fn loss_on_identical_pair_prints_log_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("f.json"), "[[0.6, 0.8], [0.6, 0.8]]").unwrap();
    let out = cli_ok(dir.path(), &["loss", "--point", "f.json", "--image", "f.json"]);
    assert_eq!(out, "0.693147\n");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // usage error
    assert_eq!(cli(d, &["units", "--out", "u.json"]).code, 1);
    // missing input is a runtime failure
    let missing = cli(d, &["ground", "--cloud", "none.bin", "--out", "m.bin"]);
    assert_eq!(missing.code, 2);
    assert!(missing.stderr.contains("none.bin"));
    // malformed input is a validation failure
    std::fs::write(d.join("bad.bin"), [0u8; 17]).unwrap();
    let bad = cli(d, &["ground", "--cloud", "bad.bin", "--out", "m.bin"]);
    assert_eq!(bad.code, 1);
    assert!(bad.stderr.contains("truncated record"));
    // unknown config keys are rejected before any work
    std::fs::write(d.join("cfg.json"), r#"{"train": {"steps": 3, "bogus": 1}}"#).unwrap();
    assert_eq!(cli(d, &["--config", "cfg.json", "synth", "--out", "s"]).code, 1);
    assert!(!d.join("s").exists());
    std::fs::write(d.join("cfg.json"), r#"{"train": {"tau": -1}}"#).unwrap();
    assert_eq!(cli(d, &["synth", "--config", "cfg.json", "--out", "s"]).code, 1);
    assert_eq!(cli(d, &["--help"]).code, 0);
}

#[test]
fn config_file_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.json"), r#"{"seed": 9, "train": {"steps": 4}, "scene": {"n_walls": 0}}"#).unwrap();
    cli_ok(d, &["--config", "cfg.json", "pretrain", "--out", "a"]);
    cli_ok(d, &["--config", "cfg.json", "--seed", "10", "pretrain", "--out", "b"]);
    let a = manifest_sans_time(&d.join("a/manifest.json"));
    let b = manifest_sans_time(&d.join("b/manifest.json"));
    assert_eq!((a["seed"].as_u64(), b["seed"].as_u64()), (Some(9), Some(10)));
    assert_eq!(a["config"]["train"]["steps"], 4);
    assert_eq!(a["config"]["scene"]["n_walls"], 0);
    assert_eq!(std::fs::read_to_string(d.join("a/trace.jsonl")).unwrap().lines().count(), 4);
    assert_ne!(std::fs::read(d.join("a/trace.jsonl")).unwrap(), std::fs::read(d.join("b/trace.jsonl")).unwrap());
}
