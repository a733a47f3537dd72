//! JSON documents: calibration, feature matrices, loss outputs and traces.

use std::io::BufRead;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::correspondence::CameraCalibration;
use crate::error::{invalid, Error, Result};
use crate::objective::{FeatureMatrix, LossOutput};
use crate::simulator::{FinalParams, RunTrace, StepRecord, TrainMode};

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let bytes = super::read_bytes(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &to_json_bytes(value)?)
}

/// On-disk camera: row-major 3x3 intrinsics and 4x4 LiDAR-to-camera extrinsics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibRecord {
    pub intrinsics: Vec<f64>,
    pub extrinsics: Vec<f64>,
    pub width: u32,
    pub height: u32,
}

impl CalibRecord {
    pub fn from_calibration(c: &CameraCalibration) -> Self {
        Self {
            intrinsics: c.intrinsics().iter().flatten().copied().collect(),
            extrinsics: c.extrinsics().iter().flatten().copied().collect(),
            width: c.width(),
            height: c.height(),
        }
    }

    pub fn to_calibration(&self) -> Result<CameraCalibration> {
        if self.intrinsics.len() != 9 || self.extrinsics.len() != 16 {
            return Err(invalid(format!(
                "calibration needs 9 intrinsics and 16 extrinsics, got {} and {}",
                self.intrinsics.len(),
                self.extrinsics.len()
            )));
        }
        let mut k = [[0.0; 3]; 3];
        let mut e = [[0.0; 4]; 4];
        for (i, v) in self.intrinsics.iter().enumerate() {
            k[i / 3][i % 3] = *v;
        }
        for (i, v) in self.extrinsics.iter().enumerate() {
            e[i / 4][i % 4] = *v;
        }
        CameraCalibration::new(k, e, self.width, self.height)
    }
}

pub fn parse_calib(text: &str) -> Result<Vec<CameraCalibration>> {
    let records: Vec<CalibRecord> = serde_json::from_str(text)?;
    records.iter().map(CalibRecord::to_calibration).collect()
}

pub fn calib_to_json(calibs: &[CameraCalibration]) -> Result<Vec<u8>> {
    let records: Vec<CalibRecord> = calibs.iter().map(CalibRecord::from_calibration).collect();
    to_json_bytes(&records)
}

pub fn read_calib(path: impl AsRef<Path>) -> Result<Vec<CameraCalibration>> {
    parse_calib(&String::from_utf8(super::read_bytes(path)?).map_err(|e| invalid(e.to_string()))?)
}

pub fn write_calib(calibs: &[CameraCalibration], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &calib_to_json(calibs)?)
}

/// A feature matrix stored as a JSON array of equal-length rows.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let rows: Vec<Vec<f64>> = read_json(path)?;
    FeatureMatrix::from_rows(&rows)
}

pub fn write_matrix(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_json(&m.to_rows(), path)
}

/// Output document of a loss evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossReport {
    pub value: f64,
    pub tau: f64,
    pub grad_point: Vec<Vec<f64>>,
    pub grad_image: Vec<Vec<f64>>,
}

impl LossReport {
    pub fn new(out: &LossOutput, tau: f64) -> Self {
        Self {
            value: out.value,
            tau,
            grad_point: out.grad_point.to_rows(),
            grad_image: out.grad_image.to_rows(),
        }
    }
}

/// One compact JSON object per line.
pub fn trace_to_jsonl(records: &[StepRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<StepRecord>> {
    let bytes = super::read_bytes(path)?;
    let mut out = Vec::new();
    for (n, line) in bytes.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| invalid(format!("trace line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub loss: f64,
    pub contrastive_accuracy: f64,
    pub alignment_score: f64,
}

impl From<&StepRecord> for MetricPoint {
    fn from(r: &StepRecord) -> Self {
        Self {
            loss: r.loss,
            contrastive_accuracy: r.contrastive_accuracy,
            alignment_score: r.alignment_score,
        }
    }
}

/// Final summary of a pre-training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: TrainMode,
    pub steps: usize,
    pub initial: MetricPoint,
    pub last: MetricPoint,
    pub first_step_accuracy_0_9: Option<usize>,
    pub first_step_accuracy_0_95: Option<usize>,
    pub final_params: FinalParams,
}

impl RunSummary {
    pub fn new(trace: &RunTrace) -> Result<Self> {
        let (Some(first), Some(last)) = (trace.records.first(), trace.records.last()) else {
            return Err(Error::Invalid("empty run trace".into()));
        };
        Ok(Self {
            mode: trace.mode,
            steps: trace.records.len(),
            initial: first.into(),
            last: last.into(),
            first_step_accuracy_0_9: trace.first_step_reaching(0.9),
            first_step_accuracy_0_95: trace.first_step_reaching(0.95),
            final_params: trace.final_params.clone(),
        })
    }
}
