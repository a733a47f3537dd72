use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::render::{render_feature_maps, RenderConfig};
use crate::correspondence::{pinhole, CameraCalibration, FeatureMap};
use crate::error::{invalid, Error, Result};
use crate::geom::{Point3, PointCloud};

/// Retries per object before placement gives up.
pub const MAX_PLACEMENT_RETRIES: usize = 1000;
/// Minimum BEV gap between object footprints.
pub const OBJECT_GAP_M: f64 = 1.0;
/// Ground returns closer than this are never generated.
pub const BLIND_RADIUS_M: f64 = 2.5;
const REFERENCE_RANGE_M: f64 = 10.0;
const INTENSITY_NOISE: f64 = 0.05;

pub const VEHICLE_SIZE_M: [f64; 3] = [4.5, 1.9, 1.6];
pub const VEHICLE_CLEARANCE_M: f64 = 0.3;
pub const PEDESTRIAN_RADIUS_M: f64 = 0.3;
pub const PEDESTRIAN_HEIGHT_M: f64 = 1.7;
pub const WALL_THICKNESS_M: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum SemanticClass {
    Ground = 0,
    Vehicle = 1,
    Pedestrian = 2,
    Wall = 3,
}

impl SemanticClass {
    pub const ALL: [SemanticClass; 4] = [Self::Ground, Self::Vehicle, Self::Pedestrian, Self::Wall];

    pub fn from_u8(v: u8) -> Result<Self> {
        Self::ALL
            .get(v as usize)
            .copied()
            .ok_or_else(|| invalid(format!("unknown class label {v}")))
    }

    fn base_intensity(self) -> f64 {
        match self {
            Self::Ground => 0.15,
            Self::Vehicle => 0.65,
            Self::Pedestrian => 0.45,
            Self::Wall => 0.3,
        }
    }

    pub fn is_instance(self) -> bool {
        matches!(self, Self::Vehicle | Self::Pedestrian)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub extent_m: f64,
    pub n_vehicles: usize,
    pub n_pedestrians: usize,
    pub n_walls: usize,
    /// Ground density at the 10 m reference range; falls off as 1/range².
    pub points_per_m2: f64,
    pub noise_sigma_m: f64,
    pub n_cameras: usize,
    pub image_width: u32,
    pub image_height: u32,
    pub camera_height_m: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            extent_m: 25.0,
            n_vehicles: 6,
            n_pedestrians: 8,
            n_walls: 3,
            points_per_m2: 20.0,
            noise_sigma_m: 0.02,
            n_cameras: 4,
            image_width: 256,
            image_height: 128,
            camera_height_m: 1.6,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("scene: {m}")));
        if !(self.extent_m.is_finite() && self.extent_m > BLIND_RADIUS_M) {
            return fail("extent_m must exceed the blind radius");
        }
        if !(self.points_per_m2.is_finite() && self.points_per_m2 > 0.0) {
            return fail("points_per_m2 must be positive");
        }
        if !(self.noise_sigma_m.is_finite() && self.noise_sigma_m >= 0.0) {
            return fail("noise_sigma_m must be non-negative");
        }
        if self.image_width == 0 || self.image_height == 0 {
            return fail("image size must be positive");
        }
        if !self.camera_height_m.is_finite() {
            return fail("camera_height_m must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub class: SemanticClass,
    /// Footprint centre; z is the bottom of the object.
    pub center: Point3,
    /// Length, width, height.
    pub size: [f64; 3],
    pub yaw_rad: f64,
    pub members: Vec<usize>,
}

impl ObjectRecord {
    /// Radius of the BEV circle enclosing the footprint.
    pub fn bev_radius(&self) -> f64 {
        0.5 * self.size[0].hypot(self.size[1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub cloud: PointCloud,
    pub labels: Vec<SemanticClass>,
    pub objects: Vec<ObjectRecord>,
    pub calibs: Vec<CameraCalibration>,
    /// One fused map per camera.
    pub feature_maps: Vec<FeatureMap>,
}

/// Ring of `n` cameras at the sensor origin, evenly spaced in yaw, looking
/// horizontally. Horizontal FOV is `min(360°/n, 100°)`.
pub fn ring_cameras(n: usize, width: u32, height: u32, mount_height_m: f64) -> Result<Vec<CameraCalibration>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let hfov = (TAU / n as f64).min(100f64.to_radians());
    let f = width as f64 / 2.0 / (hfov / 2.0).tan();
    let k = pinhole(f, f, width as f64 / 2.0, height as f64 / 2.0);
    (0..n)
        .map(|c| {
            let (s, co) = (TAU * c as f64 / n as f64).sin_cos();
            // rows: right, down, forward
            let r = [[s, -co, 0.0], [0.0, 0.0, -1.0], [co, s, 0.0]];
            let mount = [0.0, 0.0, mount_height_m];
            let mut e = [[0.0; 4]; 4];
            for i in 0..3 {
                e[i][..3].copy_from_slice(&r[i]);
                e[i][3] = -(r[i][0] * mount[0] + r[i][1] * mount[1] + r[i][2] * mount[2]);
            }
            e[3][3] = 1.0;
            CameraCalibration::new(k, e, width, height)
        })
        .collect()
}

struct Builder<'a> {
    rng: &'a mut ChaCha8Rng,
    noise: Option<Normal<f64>>,
    density: f64,
    points: Vec<Point3>,
    intensities: Vec<f64>,
    labels: Vec<SemanticClass>,
}

impl Builder<'_> {
    fn density_at(&self, range: f64) -> f64 {
        self.density * (REFERENCE_RANGE_M / range.max(1.0)).powi(2)
    }

    fn count(&mut self, expected: f64) -> usize {
        let base = expected.floor();
        base as usize + usize::from(self.rng.random::<f64>() < expected - base)
    }

    fn push(&mut self, p: Point3, class: SemanticClass) -> usize {
        let mut p = p;
        if let Some(n) = self.noise {
            for c in &mut p {
                *c += n.sample(self.rng);
            }
        }
        let i = (class.base_intensity() + INTENSITY_NOISE * self.rng.sample::<f64, _>(rand_distr::StandardNormal))
            .clamp(0.0, 1.0);
        self.points.push(p);
        self.intensities.push(i);
        self.labels.push(class);
        self.points.len() - 1
    }

    /// Samples the parallelogram `o + s e1 + t e2` if it faces the sensor.
    fn face(&mut self, o: Point3, e1: Point3, e2: Point3, class: SemanticClass, out: &mut Vec<usize>) {
        let n = cross(e1, e2);
        let area = norm3(n);
        let c = [
            o[0] + 0.5 * (e1[0] + e2[0]),
            o[1] + 0.5 * (e1[1] + e2[1]),
            o[2] + 0.5 * (e1[2] + e2[2]),
        ];
        let is_top = n[2].abs() > 0.99 * area;
        // tops are always sampled; sides only when their outward normal faces the sensor
        if !is_top && n[0] * -c[0] + n[1] * -c[1] <= 0.0 {
            return;
        }
        let k = self.count(area * self.density_at(c[0].hypot(c[1])));
        for _ in 0..k {
            let (s, t) = (self.rng.random::<f64>(), self.rng.random::<f64>());
            let p = [
                o[0] + s * e1[0] + t * e2[0],
                o[1] + s * e1[1] + t * e2[1],
                o[2] + s * e1[2] + t * e2[2],
            ];
            out.push(self.push(p, class));
        }
    }

    /// Oriented box: the four sides with outward normals plus the top.
    fn cuboid(&mut self, obj: &ObjectRecord) -> Vec<usize> {
        let [l, w, h] = obj.size;
        let (s, c) = obj.yaw_rad.sin_cos();
        let ax = [c * l, s * l, 0.0];
        let ay = [-s * w, c * w, 0.0];
        let up = [0.0, 0.0, h];
        let corner = [
            obj.center[0] - 0.5 * (ax[0] + ay[0]),
            obj.center[1] - 0.5 * (ax[1] + ay[1]),
            obj.center[2],
        ];
        let add = |a: Point3, b: Point3| [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
        let mut out = Vec::new();
        // outward normal = e1 x e2 for each face
        self.face(corner, ax, up, obj.class, &mut out);
        self.face(add(corner, ay), up, ax, obj.class, &mut out);
        self.face(corner, up, ay, obj.class, &mut out);
        self.face(add(corner, ax), ay, up, obj.class, &mut out);
        self.face(add(corner, up), ax, ay, obj.class, &mut out);
        out
    }

    fn cylinder(&mut self, obj: &ObjectRecord) -> Vec<usize> {
        let r = 0.5 * obj.size[0];
        let h = obj.size[2];
        let [cx, cy, z0] = obj.center;
        let range = cx.hypot(cy);
        let facing = (-cy).atan2(-cx);
        let density = self.density_at(range);
        let mut out = Vec::new();
        let side = self.count(PI * r * h * density);
        for _ in 0..side {
            let a = facing + (self.rng.random::<f64>() - 0.5) * PI;
            let z = z0 + self.rng.random::<f64>() * h;
            out.push(self.push([cx + r * a.cos(), cy + r * a.sin(), z], obj.class));
        }
        let top = self.count(PI * r * r * density);
        for _ in 0..top {
            let rr = r * self.rng.random::<f64>().sqrt();
            let a = self.rng.random::<f64>() * TAU;
            out.push(self.push([cx + rr * a.cos(), cy + rr * a.sin(), z0 + h], obj.class));
        }
        out
    }
}

fn cross(a: Point3, b: Point3) -> Point3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm3(a: Point3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn inside_footprint(obj: &ObjectRecord, x: f64, y: f64) -> bool {
    let (dx, dy) = (x - obj.center[0], y - obj.center[1]);
    match obj.class {
        SemanticClass::Pedestrian => dx.hypot(dy) <= 0.5 * obj.size[0],
        _ => {
            let (s, c) = obj.yaw_rad.sin_cos();
            let (lx, ly) = (c * dx + s * dy, -s * dx + c * dy);
            lx.abs() <= 0.5 * obj.size[0] && ly.abs() <= 0.5 * obj.size[1]
        }
    }
}

fn place_objects(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Result<Vec<ObjectRecord>> {
    let mut placed: Vec<ObjectRecord> = Vec::new();
    let kinds = std::iter::repeat_n(SemanticClass::Wall, spec.n_walls)
        .chain(std::iter::repeat_n(SemanticClass::Vehicle, spec.n_vehicles))
        .chain(std::iter::repeat_n(SemanticClass::Pedestrian, spec.n_pedestrians));
    for class in kinds {
        let size = match class {
            SemanticClass::Vehicle => VEHICLE_SIZE_M,
            SemanticClass::Pedestrian => [2.0 * PEDESTRIAN_RADIUS_M, 2.0 * PEDESTRIAN_RADIUS_M, PEDESTRIAN_HEIGHT_M],
            SemanticClass::Wall => [rng.random_range(6.0..10.0), WALL_THICKNESS_M, rng.random_range(2.5..3.0)],
            SemanticClass::Ground => unreachable!("ground is not an object"),
        };
        let z0 = if class == SemanticClass::Vehicle { VEHICLE_CLEARANCE_M } else { 0.0 };
        let mut ok = None;
        for _ in 0..MAX_PLACEMENT_RETRIES {
            let yaw = rng.random_range(0.0..PI);
            let x = rng.random_range(-spec.extent_m..spec.extent_m);
            let y = rng.random_range(-spec.extent_m..spec.extent_m);
            let cand = ObjectRecord {
                class,
                center: [x, y, z0],
                size,
                yaw_rad: yaw,
                members: Vec::new(),
            };
            let r = cand.bev_radius();
            let in_bounds = x.abs() + r <= spec.extent_m && y.abs() + r <= spec.extent_m;
            let clear_of_sensor = x.hypot(y) - r >= BLIND_RADIUS_M + 2.0;
            let separated = placed.iter().all(|o| {
                (o.center[0] - x).hypot(o.center[1] - y) >= o.bev_radius() + r + OBJECT_GAP_M
            });
            if in_bounds && clear_of_sensor && separated {
                ok = Some(cand);
                break;
            }
        }
        match ok {
            Some(o) => placed.push(o),
            None => {
                return Err(Error::Placement(format!(
                    "no free spot for object {} ({class:?}) after {MAX_PLACEMENT_RETRIES} tries",
                    placed.len()
                )))
            }
        }
    }
    Ok(placed)
}

/// Generates a labelled scene with cameras and rendered feature maps.
/// Bit-identical for identical `(spec, render, seed)`.
pub fn generate_scene(spec: &SceneSpec, render: &RenderConfig, seed: u64) -> Result<SyntheticScene> {
    spec.validate()?;
    render.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut objects = place_objects(spec, &mut rng)?;

    let noise = (spec.noise_sigma_m > 0.0).then(|| Normal::new(0.0, spec.noise_sigma_m).expect("finite sigma"));
    let mut b = Builder {
        rng: &mut rng,
        noise,
        density: spec.points_per_m2,
        points: Vec::new(),
        intensities: Vec::new(),
        labels: Vec::new(),
    };

    // ground: with r log-uniform the areal density falls off as 1/r²
    let r_max = spec.extent_m * std::f64::consts::SQRT_2;
    let log_span = (r_max / BLIND_RADIUS_M).ln();
    let expected = spec.points_per_m2 * REFERENCE_RANGE_M * REFERENCE_RANGE_M * TAU * log_span;
    let n_ground = b.count(expected);
    for _ in 0..n_ground {
        let r = BLIND_RADIUS_M * (b.rng.random::<f64>() * log_span).exp();
        let a = b.rng.random::<f64>() * TAU;
        let (x, y) = (r * a.cos(), r * a.sin());
        if x.abs() > spec.extent_m || y.abs() > spec.extent_m {
            continue;
        }
        // solid obstacles hide the ground beneath them; vehicles stand on wheels
        if objects
            .iter()
            .any(|o| o.class != SemanticClass::Vehicle && inside_footprint(o, x, y))
        {
            continue;
        }
        b.push([x, y, 0.0], SemanticClass::Ground);
    }

    for obj in &mut objects {
        obj.members = match obj.class {
            SemanticClass::Pedestrian => b.cylinder(obj),
            _ => b.cuboid(obj),
        };
    }

    let Builder {
        points,
        intensities,
        labels,
        ..
    } = b;
    let cloud = PointCloud::new(points, intensities)?.with_frame_id(format!("synthetic-{seed}"));
    let calibs = ring_cameras(spec.n_cameras, spec.image_width, spec.image_height, spec.camera_height_m)?;
    let feature_maps = render_feature_maps(&cloud, &labels, &calibs, render, rng.random())?;
    Ok(SyntheticScene {
        cloud,
        labels,
        objects,
        calibs,
        feature_maps,
    })
}
