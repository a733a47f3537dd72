use super::camera::{project_point, CameraCalibration};
use crate::error::{invalid, Error, Result};
use crate::geom::Point3;

/// Dense `height x width x channels` feature grid at `1/scale` image resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    scale: u32,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, scale: u32, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 || scale == 0 {
            return Err(invalid("feature map dimensions and scale must be positive"));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::PayloadSize {
                expected,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("feature map contains non-finite values"));
        }
        Ok(Self {
            height,
            width,
            channels,
            scale,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Feature vector of cell `(row, col)`.
    pub fn cell(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Source image size implied by the grid and its scale.
    pub fn image_size(&self) -> (usize, usize) {
        (self.width * self.scale as usize, self.height * self.scale as usize)
    }

    pub fn matches_camera(&self, calib: &CameraCalibration) -> bool {
        self.image_size() == (calib.width() as usize, calib.height() as usize)
    }

    /// Cell-space coordinates of pixel `(u, v)`: cell centres sit at pixel
    /// centres of the downsampled grid.
    pub fn cell_coords(&self, u: f64, v: f64) -> (f64, f64) {
        let s = self.scale as f64;
        (u / s - 0.5, v / s - 0.5)
    }

    fn bilinear(&self, cu: f64, cv: f64) -> Vec<f64> {
        let (c0, fu) = axis_weights(cu, self.width);
        let (r0, fv) = axis_weights(cv, self.height);
        let c1 = (c0 + 1).min(self.width - 1);
        let r1 = (r0 + 1).min(self.height - 1);
        let (a, b, c, d) = (self.cell(r0, c0), self.cell(r0, c1), self.cell(r1, c0), self.cell(r1, c1));
        (0..self.channels)
            .map(|k| {
                let top = (1.0 - fu) * a[k] as f64 + fu * b[k] as f64;
                let bottom = (1.0 - fu) * c[k] as f64 + fu * d[k] as f64;
                (1.0 - fv) * top + fv * bottom
            })
            .collect()
    }

    /// Bilinear sample with cell coordinates clamped onto the grid. Pixels in
    /// the outer half cell of the image read the border cells.
    pub fn sample_clamped(&self, u: f64, v: f64) -> Vec<f64> {
        let (cu, cv) = self.cell_coords(u, v);
        let cu = cu.clamp(0.0, (self.width - 1) as f64);
        let cv = cv.clamp(0.0, (self.height - 1) as f64);
        self.bilinear(cu, cv)
    }
}

/// Lower node index and interpolation weight along one axis of length `n`.
fn axis_weights(c: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let i0 = (c.floor() as usize).min(n - 2);
    (i0, c - i0 as f64)
}

/// Bilinear feature at pixel `(u, v)`.
///
/// Fails with [`Error::OutsideGrid`] when the pixel maps outside
/// `[0, width-1] x [0, height-1]` in cell coordinates.
pub fn sample_feature(map: &FeatureMap, u: f64, v: f64) -> Result<Vec<f64>> {
    let (cu, cv) = map.cell_coords(u, v);
    let inside = cu >= 0.0 && cu <= (map.width - 1) as f64 && cv >= 0.0 && cv <= (map.height - 1) as f64;
    if !inside {
        return Err(Error::OutsideGrid { u, v });
    }
    Ok(map.bilinear(cu, cv))
}

/// Upsamples every level to the finest scale and concatenates channels in
/// input order. `maps` must be ordered finest first with strictly increasing
/// scales that are integer multiples of the finest.
pub fn fuse_levels(maps: &[FeatureMap]) -> Result<FeatureMap> {
    let finest = maps
        .first()
        .ok_or_else(|| Error::FeatureGeometry("no feature levels given".into()))?;
    for pair in maps.windows(2) {
        if pair[1].scale <= pair[0].scale {
            return Err(Error::FeatureGeometry("levels must have strictly increasing scales".into()));
        }
    }
    for m in maps {
        if m.scale % finest.scale != 0 {
            return Err(Error::FeatureGeometry(format!(
                "scale {} is not a multiple of the finest scale {}",
                m.scale, finest.scale
            )));
        }
        if m.image_size() != finest.image_size() {
            return Err(Error::FeatureGeometry(format!(
                "level at scale {} covers a {:?} image, finest covers {:?}",
                m.scale,
                m.image_size(),
                finest.image_size()
            )));
        }
    }
    if maps.len() == 1 {
        return Ok(finest.clone());
    }

    let (h, w) = (finest.height, finest.width);
    let channels: usize = maps.iter().map(|m| m.channels).sum();
    let mut data = Vec::with_capacity(h * w * channels);
    let s = finest.scale as f64;
    for row in 0..h {
        for col in 0..w {
            data.extend_from_slice(finest.cell(row, col));
            let u = (col as f64 + 0.5) * s;
            let v = (row as f64 + 0.5) * s;
            for m in &maps[1..] {
                data.extend(m.sample_clamped(u, v).into_iter().map(|x| x as f32));
            }
        }
    }
    FeatureMap::new(h, w, channels, finest.scale, data)
}

/// Mean image feature of `point` over every camera that sees it, or `None`
/// when no camera does.
pub fn pool_cameras(point: &Point3, calibs: &[CameraCalibration], maps: &[FeatureMap]) -> Result<Option<Vec<f64>>> {
    check_camera_maps(calibs, maps)?;
    let mut acc: Option<Vec<f64>> = None;
    let mut seen = 0usize;
    for (calib, map) in calibs.iter().zip(maps) {
        let Some(px) = project_point(point, calib) else {
            continue;
        };
        let f = map.sample_clamped(px.u, px.v);
        match acc.as_mut() {
            None => acc = Some(f),
            Some(sum) => sum.iter_mut().zip(&f).for_each(|(s, x)| *s += x),
        }
        seen += 1;
    }
    Ok(acc.map(|mut sum| {
        let n = seen as f64;
        sum.iter_mut().for_each(|s| *s /= n);
        sum
    }))
}

pub(crate) fn check_camera_maps(calibs: &[CameraCalibration], maps: &[FeatureMap]) -> Result<()> {
    if calibs.len() != maps.len() {
        return Err(Error::Shape(format!(
            "{} cameras but {} feature maps",
            calibs.len(),
            maps.len()
        )));
    }
    if let Some(first) = maps.first() {
        if let Some(bad) = maps.iter().position(|m| m.channels != first.channels) {
            return Err(Error::Shape(format!(
                "camera {bad} has {} channels, camera 0 has {}",
                maps[bad].channels, first.channels
            )));
        }
    }
    for (i, (c, m)) in calibs.iter().zip(maps).enumerate() {
        if !m.matches_camera(c) {
            return Err(Error::FeatureGeometry(format!(
                "camera {i}: map covers {:?} but image is {}x{}",
                m.image_size(),
                c.width(),
                c.height()
            )));
        }
    }
    Ok(())
}
