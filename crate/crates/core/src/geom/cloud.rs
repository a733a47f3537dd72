use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub type Point3 = [f64; 3];

/// A single LiDAR frame: positions in meters plus per-point intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    intensities: Vec<f64>,
    frame_id: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, intensities: Vec<f64>) -> Result<Self> {
        if points.len() != intensities.len() {
            return Err(invalid(format!(
                "{} points but {} intensities",
                points.len(),
                intensities.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(invalid(format!("point {i} has a non-finite coordinate")));
        }
        if let Some(i) = intensities
            .iter()
            .position(|v| !v.is_finite() || !(0.0..=1.0).contains(v))
        {
            return Err(invalid(format!("intensity {i} outside [0, 1]")));
        }
        Ok(Self {
            points,
            intensities,
            frame_id: String::new(),
        })
    }

    pub fn empty() -> Self {
        Self {
            points: Vec::new(),
            intensities: Vec::new(),
            frame_id: String::new(),
        }
    }

    pub fn with_frame_id(mut self, frame_id: impl Into<String>) -> Self {
        self.frame_id = frame_id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn point(&self, index: usize) -> Point3 {
        self.points[index]
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn frame_id(&self) -> &str {
        &self.frame_id
    }
}

#[inline]
pub fn dist2(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub fn bev_dist2(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Rigid-plus-scale augmentation applied to the point branch input.
///
/// Applied in order: rotation about +z, uniform scale about the origin, then
/// the optional mirror flips (`flip_x` negates x, `flip_y` negates y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationParams {
    pub rotation_rad: f64,
    pub scale: f64,
    pub flip_x: bool,
    pub flip_y: bool,
}

impl Default for AugmentationParams {
    fn default() -> Self {
        Self::identity()
    }
}

impl AugmentationParams {
    pub fn identity() -> Self {
        Self {
            rotation_rad: 0.0,
            scale: 1.0,
            flip_x: false,
            flip_y: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rotation_rad.is_finite() {
            return Err(invalid("rotation must be finite"));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(invalid("scale must be positive"));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, p: &Point3) -> Point3 {
        let (s, c) = self.rotation_rad.sin_cos();
        let mut x = (p[0] * c - p[1] * s) * self.scale;
        let mut y = (p[0] * s + p[1] * c) * self.scale;
        let z = p[2] * self.scale;
        if self.flip_x {
            x = -x;
        }
        if self.flip_y {
            y = -y;
        }
        [x, y, z]
    }
}

/// Sampling ranges for random augmentations during pre-training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationRanges {
    pub max_rotation_rad: f64,
    pub min_scale: f64,
    pub max_scale: f64,
    pub flip_probability: f64,
}

impl Default for AugmentationRanges {
    fn default() -> Self {
        Self {
            max_rotation_rad: std::f64::consts::FRAC_PI_4,
            min_scale: 0.95,
            max_scale: 1.05,
            flip_probability: 0.5,
        }
    }
}

impl AugmentationRanges {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_rotation_rad.is_finite() && self.max_rotation_rad >= 0.0) {
            return Err(invalid("max_rotation_rad must be finite and non-negative"));
        }
        if !(self.min_scale > 0.0 && self.min_scale <= self.max_scale && self.max_scale.is_finite())
        {
            return Err(invalid("scale range must satisfy 0 < min_scale <= max_scale"));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(invalid("flip_probability must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AugmentationParams {
        let rotation_rad = if self.max_rotation_rad > 0.0 {
            rng.random_range(-self.max_rotation_rad..=self.max_rotation_rad)
        } else {
            0.0
        };
        let scale = if self.max_scale > self.min_scale {
            rng.random_range(self.min_scale..=self.max_scale)
        } else {
            self.min_scale
        };
        AugmentationParams {
            rotation_rad,
            scale,
            flip_x: rng.random_bool(self.flip_probability),
            flip_y: rng.random_bool(self.flip_probability),
        }
    }
}

/// Applies `params` to every point; index order and intensities are preserved.
pub fn augment(cloud: &PointCloud, params: &AugmentationParams) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| params.apply(p)).collect(),
        intensities: cloud.intensities.clone(),
        frame_id: cloud.frame_id.clone(),
    }
}
