use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::json::write_json;
use crate::error::{invalid, Result};

pub const MANIFEST_VERSION: &str = "1";
pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        })
    }
}

/// Provenance record written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: String,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Seconds since the Unix epoch. The only field that varies between
    /// otherwise identical runs.
    pub created_unix_s: u64,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        let created_unix_s = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        Self {
            version: MANIFEST_VERSION.into(),
            tool: TOOL_NAME.into(),
            tool_version: TOOL_VERSION.into(),
            command: command.into(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            created_unix_s,
        }
    }

    pub fn add_input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.outputs.push(FileDigest::of(path)?);
        Ok(())
    }

    /// Recomputes every recorded hash.
    pub fn verify(&self) -> Result<()> {
        for d in self.inputs.iter().chain(&self.outputs) {
            let now = sha256_file(&d.path)?;
            if now != d.sha256 {
                return Err(invalid(format!("{} changed since the manifest was written", d.path)));
            }
        }
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(self, path)
    }
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    Ok(hex::encode(Sha256::digest(super::read_bytes(path)?)))
}

/// `DIR/manifest.json` for a directory output, `<out>.manifest.json` for a
/// file.
pub fn manifest_path_for(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("manifest.json")
    } else {
        let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        out.with_file_name(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_and_verification() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.bin");
        std::fs::write(&f, b"abc").unwrap();
        // sha256("abc")
        assert_eq!(
            sha256_file(&f).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let mut m = Manifest::new("ground", 3, serde_json::json!({"k": 1}));
        m.add_input(&f).unwrap();
        m.verify().unwrap();
        std::fs::write(&f, b"abd").unwrap();
        assert!(m.verify().is_err());
    }

    #[test]
    fn manifest_locations() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(manifest_path_for(dir.path()), dir.path().join("manifest.json"));
        let f = dir.path().join("mask.bin");
        assert_eq!(manifest_path_for(&f), dir.path().join("mask.bin.manifest.json"));
    }
}
