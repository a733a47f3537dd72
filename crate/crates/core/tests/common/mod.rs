#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs the CLI binary in `cwd` with logging silenced.
pub fn cli(cwd: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_lidar-units"))
        .args(args)
        .current_dir(cwd)
        .env("UNITS_LOG", "quiet")
        .output()
        .expect("spawn lidar-units");
    Output {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

pub fn cli_ok(cwd: &Path, args: &[&str]) -> String {
    let out = cli(cwd, args);
    assert_eq!(out.code, 0, "{args:?} failed: {}", out.stderr);
    out.stdout
}

pub fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas")
}

/// Validates a JSON file against one of the shipped schemas.
pub fn assert_schema(schema: &str, doc: &Path) {
    let schema: serde_json::Value =
        serde_json::from_slice(&std::fs::read(schema_dir().join(schema)).unwrap()).unwrap();
    let value: serde_json::Value = serde_json::from_slice(&std::fs::read(doc).unwrap()).unwrap();
    if let Err(e) = jsonschema::validate(&schema, &value) {
        panic!("{} violates {}: {e}", doc.display(), schema["title"]);
    }
}

/// Manifest JSON with the timestamp removed.
pub fn manifest_sans_time(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("created_unix_s");
    v
}
