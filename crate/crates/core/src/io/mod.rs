//! File formats and run persistence.
//!
//! JSON for structured data, raw little-endian binary for bulk tensors. Every
//! writer goes through [`write_atomic`].

mod binary;
mod json;
mod manifest;
mod scene_dir;

use std::io::Write;
use std::path::Path;

pub use binary::{
    decode_cloud, decode_featmap, decode_labels, decode_mask, encode_cloud, encode_featmap, encode_labels, encode_mask,
    read_cloud, read_featmap, read_labels, read_mask, write_cloud, write_featmap, write_labels, write_mask,
    CLOUD_RECORD_BYTES, FMAP_HEADER_BYTES, FMAP_MAGIC, FMAP_VERSION,
};
pub use json::{
    calib_to_json, parse_calib, read_calib, read_json, read_matrix, read_trace, to_json_bytes, trace_to_jsonl,
    write_calib, write_json, write_matrix, CalibRecord, LossReport, MetricPoint, RunSummary,
};
pub use manifest::{manifest_path_for, sha256_file, FileDigest, Manifest, MANIFEST_VERSION, TOOL_NAME, TOOL_VERSION};
pub use scene_dir::{featmap_file_name, write_scene_dir, SceneFiles};

/// Reads a whole file; IO errors name the path.
pub fn read_bytes(path: impl AsRef<Path>) -> crate::Result<Vec<u8>> {
    let path = path.as_ref();
    std::fs::read(path).map_err(|e| with_path(e, path))
}

fn with_path(e: std::io::Error, path: &Path) -> crate::Error {
    crate::Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Writes `bytes` to a temporary file in the target directory, then renames
/// it over `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> crate::Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| with_path(e, path))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| with_path(e.error, path))?;
    Ok(())
}
