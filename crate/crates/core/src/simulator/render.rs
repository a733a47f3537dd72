use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::scene::SemanticClass;
use crate::correspondence::{fuse_levels, project_point, CameraCalibration, FeatureMap};
use crate::error::{Error, Result};
use crate::geom::PointCloud;
use crate::objective::{dot, norm};

/// Stand-in for a frozen image backbone: every class owns a fixed unit
/// embedding, optionally modulated by a smooth function of range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    pub embed_dim: usize,
    pub noise_sigma: f64,
    /// Weight of the range-dependent appearance term; 0 gives pure class
    /// embeddings.
    pub appearance_weight: f64,
    pub appearance_lengthscale_m: f64,
    /// Downsampling factors of the rendered levels, finest first. Levels are
    /// fused by channel concatenation.
    pub levels: Vec<u32>,
    /// Seed of the class embeddings and appearance basis. Shared by every
    /// scene so features mean the same thing across frames.
    pub embedding_seed: u64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            embed_dim: 16,
            noise_sigma: 0.05,
            appearance_weight: 0.3,
            appearance_lengthscale_m: 8.0,
            levels: vec![4],
            embedding_seed: 0x5eed_1a7e,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("render: {m}")));
        if self.embed_dim < 2 {
            return fail("embed_dim must be at least 2");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return fail("noise_sigma must be non-negative");
        }
        if !(self.appearance_weight.is_finite() && self.appearance_weight >= 0.0) {
            return fail("appearance_weight must be non-negative");
        }
        if !(self.appearance_lengthscale_m.is_finite() && self.appearance_lengthscale_m > 0.0) {
            return fail("appearance_lengthscale_m must be positive");
        }
        if self.levels.is_empty() || self.levels.contains(&0) {
            return fail("levels must be a non-empty list of positive scales");
        }
        Ok(())
    }
}

/// Class embeddings plus the appearance basis derived from a [`RenderConfig`].
#[derive(Debug, Clone)]
pub struct Palette {
    classes: Vec<Vec<f64>>,
    omega: Vec<f64>,
    phase: Vec<f64>,
    weight: f64,
}

impl Palette {
    pub fn new(cfg: &RenderConfig) -> Self {
        let d = cfg.embed_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.embedding_seed);
        let mut classes: Vec<Vec<f64>> = Vec::new();
        for k in 0..SemanticClass::ALL.len() {
            let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            // Gram-Schmidt while the dimension allows it
            if k < d {
                for c in &classes {
                    let p = dot(&v, c);
                    v.iter_mut().zip(c).for_each(|(x, y)| *x -= p * y);
                }
            }
            let n = norm(&v);
            v.iter_mut().for_each(|x| *x /= n);
            classes.push(v);
        }
        let w = Normal::new(0.0, 1.0 / cfg.appearance_lengthscale_m).expect("positive lengthscale");
        let omega = (0..d).map(|_| w.sample(&mut rng)).collect();
        let phase = (0..d).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        Self {
            classes,
            omega,
            phase,
            weight: cfg.appearance_weight,
        }
    }

    pub fn class_embedding(&self, class: SemanticClass) -> &[f64] {
        &self.classes[class as usize]
    }

    /// Noise-free feature of a point of `class` at horizontal range `range_m`.
    /// The appearance term is kept orthogonal to the class embedding.
    pub fn embed(&self, class: SemanticClass, range_m: f64) -> Vec<f64> {
        let e = self.class_embedding(class);
        if self.weight == 0.0 {
            return e.to_vec();
        }
        let d = e.len() as f64;
        let mut a: Vec<f64> = self
            .omega
            .iter()
            .zip(&self.phase)
            .map(|(w, p)| (2.0 / d).sqrt() * (w * range_m + p).cos())
            .collect();
        let along = dot(&a, e);
        a.iter_mut().zip(e).for_each(|(x, y)| *x -= along * y);
        e.iter().zip(&a).map(|(x, y)| x + self.weight * y).collect()
    }
}

/// Renders one fused feature map per camera.
///
/// Each point splats its class feature into the cell it projects to; the
/// nearest point wins a contested cell, and untouched cells hold the ground
/// embedding. Gaussian noise is added to every channel of every cell.
pub fn render_feature_maps(
    cloud: &PointCloud,
    labels: &[SemanticClass],
    calibs: &[CameraCalibration],
    cfg: &RenderConfig,
    seed: u64,
) -> Result<Vec<FeatureMap>> {
    cfg.validate()?;
    if labels.len() != cloud.len() {
        return Err(Error::Shape(format!("{} labels for {} points", labels.len(), cloud.len())));
    }
    let palette = Palette::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (cfg.noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.noise_sigma).expect("finite sigma"));
    let d = cfg.embed_dim;

    let mut out = Vec::with_capacity(calibs.len());
    for calib in calibs {
        let pixels: Vec<_> = cloud.points().iter().map(|p| project_point(p, calib)).collect();
        let mut levels = Vec::with_capacity(cfg.levels.len());
        for &scale in &cfg.levels {
            let (w, h) = (calib.width() as usize, calib.height() as usize);
            let s = scale as usize;
            if w % s != 0 || h % s != 0 {
                return Err(Error::FeatureGeometry(format!("image {w}x{h} is not divisible by scale {scale}")));
            }
            let (gw, gh) = (w / s, h / s);
            let mut depth = vec![f64::INFINITY; gw * gh];
            let mut owner: Vec<Option<usize>> = vec![None; gw * gh];
            for (i, px) in pixels.iter().enumerate() {
                let Some(px) = px else { continue };
                let cell = (px.v as usize / s) * gw + px.u as usize / s;
                if px.depth_m < depth[cell] {
                    depth[cell] = px.depth_m;
                    owner[cell] = Some(i);
                }
            }
            let background = palette.class_embedding(SemanticClass::Ground).to_vec();
            let mut data = Vec::with_capacity(gw * gh * d);
            for o in &owner {
                let f = match *o {
                    Some(i) => {
                        let p = cloud.point(i);
                        palette.embed(labels[i], p[0].hypot(p[1]))
                    }
                    None => background.clone(),
                };
                for v in f {
                    let n = noise.map_or(0.0, |n| n.sample(&mut rng));
                    data.push((v + n) as f32);
                }
            }
            levels.push(FeatureMap::new(gh, gw, d, scale, data)?);
        }
        out.push(fuse_levels(&levels)?);
    }
    Ok(out)
}
