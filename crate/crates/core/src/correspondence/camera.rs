use crate::error::{invalid, Error, Result};
use crate::geom::Point3;

const RIGID_TOL: f64 = 1e-9;

/// Pinhole camera with a rigid LiDAR-to-camera transform.
///
/// Camera frame: x right, y down, z forward.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalibration {
    intrinsics: [[f64; 3]; 3],
    extrinsics: [[f64; 4]; 4],
    width: u32,
    height: u32,
}

/// Continuous pixel coordinates of a visible point plus its camera-frame depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
    pub depth_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelLocation {
    pub camera_index: usize,
    pub pixel: Pixel,
}

impl CameraCalibration {
    pub fn new(
        intrinsics: [[f64; 3]; 3],
        extrinsics: [[f64; 4]; 4],
        width: u32,
        height: u32,
    ) -> Result<Self> {
        if intrinsics.iter().flatten().chain(extrinsics.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(invalid("calibration contains non-finite values"));
        }
        let k = &intrinsics;
        if !(k[0][0] > 0.0 && k[1][1] > 0.0) {
            return Err(invalid("focal lengths must be positive"));
        }
        if k[0][1] != 0.0 || k[1][0] != 0.0 || k[2] != [0.0, 0.0, 1.0] {
            return Err(invalid("intrinsics must be a zero-skew pinhole matrix"));
        }
        if width == 0 || height == 0 {
            return Err(invalid("image size must be positive"));
        }
        check_rigid(&extrinsics)?;
        Ok(Self {
            intrinsics,
            extrinsics,
            width,
            height,
        })
    }

    pub fn intrinsics(&self) -> &[[f64; 3]; 3] {
        &self.intrinsics
    }

    pub fn extrinsics(&self) -> &[[f64; 4]; 4] {
        &self.extrinsics
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// LiDAR-frame point to camera frame.
    pub fn to_camera(&self, p: &Point3) -> Point3 {
        let e = &self.extrinsics;
        let mut out = [0.0; 3];
        for (r, o) in out.iter_mut().enumerate() {
            *o = e[r][0] * p[0] + e[r][1] * p[1] + e[r][2] * p[2] + e[r][3];
        }
        out
    }

    /// Recovers the LiDAR-frame point behind pixel `(u, v)` at `depth_m`.
    pub fn unproject(&self, u: f64, v: f64, depth_m: f64) -> Point3 {
        let k = &self.intrinsics;
        let c = [
            (u - k[0][2]) / k[0][0] * depth_m,
            (v - k[1][2]) / k[1][1] * depth_m,
            depth_m,
        ];
        let e = &self.extrinsics;
        let d = [c[0] - e[0][3], c[1] - e[1][3], c[2] - e[2][3]];
        let mut out = [0.0; 3];
        for (col, o) in out.iter_mut().enumerate() {
            *o = e[0][col] * d[0] + e[1][col] * d[1] + e[2][col] * d[2];
        }
        out
    }

    pub fn project_camera_frame(&self, c: &Point3) -> Option<Pixel> {
        if !(c[2] > 0.0) {
            return None;
        }
        let k = &self.intrinsics;
        let u = k[0][0] * (c[0] / c[2]) + k[0][2];
        let v = k[1][1] * (c[1] / c[2]) + k[1][2];
        let inside = u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64;
        inside.then_some(Pixel { u, v, depth_m: c[2] })
    }
}

fn check_rigid(e: &[[f64; 4]; 4]) -> Result<()> {
    if e[3] != [0.0, 0.0, 0.0, 1.0] {
        return Err(Error::NotRigid("last row must be (0, 0, 0, 1)".into()));
    }
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| e[i][k] * e[j][k]).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            if (dot - want).abs() > RIGID_TOL {
                return Err(Error::NotRigid(format!(
                    "rotation block not orthonormal (row {i} . row {j} = {dot})"
                )));
            }
        }
    }
    let det = e[0][0] * (e[1][1] * e[2][2] - e[1][2] * e[2][1])
        - e[0][1] * (e[1][0] * e[2][2] - e[1][2] * e[2][0])
        + e[0][2] * (e[1][0] * e[2][1] - e[1][1] * e[2][0]);
    if det < 0.0 {
        return Err(Error::NotRigid("rotation block is a reflection".into()));
    }
    Ok(())
}

/// Projects a LiDAR point into a camera. `None` when the point is behind the
/// camera or lands outside the half-open image rectangle.
pub fn project_point(point: &Point3, calib: &CameraCalibration) -> Option<Pixel> {
    calib.project_camera_frame(&calib.to_camera(point))
}

/// All cameras that see `point`, in camera order.
pub fn visible_in(point: &Point3, calibs: &[CameraCalibration]) -> Vec<PixelLocation> {
    calibs
        .iter()
        .enumerate()
        .filter_map(|(camera_index, c)| {
            project_point(point, c).map(|pixel| PixelLocation { camera_index, pixel })
        })
        .collect()
}

pub const IDENTITY4: [[f64; 4]; 4] = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64) -> [[f64; 3]; 3] {
    [[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]]
}
