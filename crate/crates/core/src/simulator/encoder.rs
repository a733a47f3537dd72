use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{FeatureMatrix, Mlp, MlpCache, MlpGrads};
use crate::units::STATS_DIM;

pub const ENCODER_HIDDEN_DIM: usize = 64;
pub const ENCODER_OUT_DIM: usize = 32;

/// Typical unit statistics on default synthetic scenes, subtracted before
/// scaling.
pub const STATS_INPUT_SHIFT: [f64; STATS_DIM] = [0.0, 0.0, 1.5, 3.0, 3.0, 1.5, 3.5, 0.5, 2.0, 20.0];
/// Roughly the inverse spread of each statistic.
pub const STATS_INPUT_SCALE: [f64; STATS_DIM] = [1.0 / 15.0, 1.0 / 15.0, 3.0, 0.4, 0.4, 2.0, 1.0, 7.0, 2.5, 0.2];

/// Toy point-branch encoder over per-unit statistics. Inputs are
/// standardized with constant `(x - shift) * scale`; only the perceptron is
/// trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub mlp: Mlp,
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    mlp: MlpCache,
}

impl EncoderParams {
    pub fn new(mlp: Mlp, input_shift: Vec<f64>, input_scale: Vec<f64>) -> Result<Self> {
        if input_scale.len() != mlp.in_dim() || input_shift.len() != mlp.in_dim() {
            return Err(Error::Shape(format!(
                "{}/{} input shifts/scales for a {}-dim encoder",
                input_shift.len(),
                input_scale.len(),
                mlp.in_dim()
            )));
        }
        if input_scale.iter().chain(&input_shift).any(|s| !s.is_finite()) {
            return Err(Error::Invalid("encoder input standardization must be finite".into()));
        }
        Ok(Self {
            mlp,
            input_shift,
            input_scale,
        })
    }

    /// Pass-through standardization (zero shift, unit scale).
    pub fn unscaled(mlp: Mlp) -> Result<Self> {
        let n = mlp.in_dim();
        Self::new(mlp, vec![0.0; n], vec![1.0; n])
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Result<Self> {
        Self::new(
            Mlp::random((STATS_DIM, ENCODER_HIDDEN_DIM, ENCODER_OUT_DIM), rng)?,
            STATS_INPUT_SHIFT.to_vec(),
            STATS_INPUT_SCALE.to_vec(),
        )
    }
}

pub fn encoder_forward(params: &EncoderParams, stats: &FeatureMatrix) -> Result<(FeatureMatrix, EncoderCache)> {
    if stats.dim() != params.input_scale.len() {
        return Err(Error::Shape(format!(
            "stats dim {} vs encoder input {}",
            stats.dim(),
            params.input_scale.len()
        )));
    }
    let mut scaled = stats.clone();
    for r in 0..scaled.rows() {
        let row = scaled.row_mut(r);
        for ((x, m), s) in row.iter_mut().zip(&params.input_shift).zip(&params.input_scale) {
            *x = (*x - m) * s;
        }
    }
    let (out, mlp) = params.mlp.forward(&scaled)?;
    Ok((out, EncoderCache { mlp }))
}

/// Parameter gradients and gradients w.r.t. the raw statistics.
pub fn encoder_backward(
    params: &EncoderParams,
    cache: &EncoderCache,
    grad_output: &FeatureMatrix,
) -> Result<(MlpGrads, FeatureMatrix)> {
    let (g, mut gx) = params.mlp.backward(&cache.mlp, grad_output)?;
    for r in 0..gx.rows() {
        gx.row_mut(r).iter_mut().zip(&params.input_scale).for_each(|(x, s)| *x *= s);
    }
    Ok((g, gx))
}
