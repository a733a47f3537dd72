//! C ABI over the `lidar-units` core.
//!
//! Every function returns an [`LuStatus`]. On failure the message is kept
//! per thread and read with [`lu_last_error_message`]. Objects are opaque
//! handles released with their `_free` function; strings returned by the
//! library are released with [`lu_string_free`]. Panics never cross the
//! boundary.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use lidar_units::correspondence::FeatureMap;
use lidar_units::geom::{segment_ground, GroundMask, PointCloud};
use lidar_units::io::{parse_calib, to_json_bytes, trace_to_jsonl};
use lidar_units::objective::{default_budget, infonce, negative_sets, similarity_matrix, FeatureMatrix, NegativeSets};
use lidar_units::simulator::{run_pretrain, RunConfig, RunTrace};
use lidar_units::units::{build_units, UnitSet, STATS_DIM};
use lidar_units::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LuStatus {
    Ok = 0,
    /// Malformed input or configuration.
    Validation = 1,
    /// IO or computation failure.
    Runtime = 2,
    NullArgument = 3,
    /// A Rust panic was caught at the boundary.
    Panic = 4,
}

/// Borrowed view of one fused `height x width x channels` feature map,
/// row-major HWC.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LuFeatureMapView {
    pub data: *const f32,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub scale: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LuStepRecord {
    pub step: usize,
    pub loss: f64,
    pub contrastive_accuracy: f64,
    pub alignment_score: f64,
    pub units: usize,
}

/// Opaque unit set.
pub struct LuUnitSet(UnitSet);
/// Opaque negative sets.
pub struct LuNegativeSets(NegativeSets);
/// Opaque pre-training trace.
pub struct LuTrace(RunTrace);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Core(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type FfiResult<T> = Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> LuStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LuStatus::Ok,
        Ok(Err(Failure::Core(e))) => {
            let status = if e.is_validation() {
                LuStatus::Validation
            } else {
                LuStatus::Runtime
            };
            set_error(e.to_string());
            status
        }
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("argument `{name}` is null"));
            LuStatus::NullArgument
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            LuStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, name: &'static str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, name: &'static str) -> FfiResult<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn reference<'a, T>(ptr: *const T, name: &'static str) -> FfiResult<&'a T> {
    ptr.as_ref().ok_or(Failure::Null(name))
}

unsafe fn string<'a>(ptr: *const c_char, name: &'static str) -> FfiResult<&'a str> {
    if ptr.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|e| Failure::Core(Error::Invalid(format!("`{name}` is not UTF-8: {e}"))))
}

unsafe fn put<T>(out: *mut *mut T, value: T, name: &'static str) -> FfiResult<()> {
    if out.is_null() {
        return Err(Failure::Null(name));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, bytes: Vec<u8>) -> FfiResult<()> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    let s = CString::new(bytes).map_err(|e| Failure::Core(Error::Invalid(e.to_string())))?;
    *out = s.into_raw();
    Ok(())
}

fn copy_into<T: Copy>(src: &[T], dst: &mut [T]) -> FfiResult<()> {
    if dst.len() < src.len() {
        return Err(Failure::Core(Error::Shape(format!(
            "output buffer holds {} values, {} needed",
            dst.len(),
            src.len()
        ))));
    }
    dst[..src.len()].copy_from_slice(src);
    Ok(())
}

fn config_or_default(json: Option<&str>) -> FfiResult<RunConfig> {
    let cfg: RunConfig = match json {
        Some(s) => serde_json::from_str(s).map_err(Error::from)?,
        None => RunConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Library version, a static nul-terminated string.
#[no_mangle]
pub extern "C" fn lu_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(s) => s,
        Err(_) => panic!("version contains a nul byte"),
    };
    VERSION.as_ptr()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next library call on the same thread.
#[no_mangle]
pub extern "C" fn lu_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by the library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn lu_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds contrastive units.
///
/// `points` is `n_points x 4` (x, y, z, intensity) row-major. `ground_mask`
/// holds one 0/1 byte per point, or null to segment ground with the
/// configured parameters. `config_json` is a run configuration (only the
/// `ground` and `units` sections are used), or null for defaults.
#[no_mangle]
pub unsafe extern "C" fn lu_build_units(
    points: *const f64,
    n_points: usize,
    ground_mask: *const u8,
    calib_json: *const c_char,
    featmaps: *const LuFeatureMapView,
    n_featmaps: usize,
    config_json: *const c_char,
    out: *mut *mut LuUnitSet,
) -> LuStatus {
    guard(|| {
        let raw = slice(points, n_points.checked_mul(4).ok_or(Error::Invalid("n_points overflows".into()))?, "points")?;
        let cfg = config_or_default(if config_json.is_null() { None } else { Some(string(config_json, "config_json")?) })?;
        let cloud = PointCloud::new(
            raw.chunks_exact(4).map(|r| [r[0], r[1], r[2]]).collect(),
            raw.chunks_exact(4).map(|r| r[3]).collect(),
        )?;
        let mask = if ground_mask.is_null() {
            segment_ground(&cloud, &cfg.ground)
        } else {
            let bytes = slice(ground_mask, n_points, "ground_mask")?;
            lidar_units::io::decode_mask(bytes)?
        };
        let calibs = parse_calib(string(calib_json, "calib_json")?)?;
        let views = slice(featmaps, n_featmaps, "featmaps")?;
        let maps = views
            .iter()
            .map(|v| {
                let n = v.height * v.width * v.channels;
                FeatureMap::new(v.height, v.width, v.channels, v.scale, slice(v.data, n, "featmaps.data")?.to_vec())
                    .map_err(Failure::from)
            })
            .collect::<FfiResult<Vec<_>>>()?;
        let units = build_units(&cloud, &mask, &calibs, &maps, &cfg.units)?;
        put(out, LuUnitSet(units), "out")
    })
}

/// Ground mask of a cloud with the configured segmentation, one byte per
/// point written to `out_mask` (capacity `n_points`).
#[no_mangle]
pub unsafe extern "C" fn lu_segment_ground(
    points: *const f64,
    n_points: usize,
    config_json: *const c_char,
    out_mask: *mut u8,
) -> LuStatus {
    guard(|| {
        let raw = slice(points, n_points.checked_mul(4).ok_or(Error::Invalid("n_points overflows".into()))?, "points")?;
        let cfg = config_or_default(if config_json.is_null() { None } else { Some(string(config_json, "config_json")?) })?;
        let cloud = PointCloud::new(
            raw.chunks_exact(4).map(|r| [r[0], r[1], r[2]]).collect(),
            raw.chunks_exact(4).map(|r| r[3]).collect(),
        )?;
        let mask: GroundMask = segment_ground(&cloud, &cfg.ground);
        copy_into(&lidar_units::io::encode_mask(&mask), slice_mut(out_mask, n_points, "out_mask")?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn lu_unit_set_len(set: *const LuUnitSet, out: *mut usize) -> LuStatus {
    guard(|| {
        let s = reference(set, "set")?;
        *slice_mut(out, 1, "out")?.first_mut().expect("one slot") = s.0.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lu_unit_set_image_dim(set: *const LuUnitSet, out: *mut usize) -> LuStatus {
    guard(|| {
        let s = reference(set, "set")?;
        *slice_mut(out, 1, "out")?.first_mut().expect("one slot") = s.0.image_dim();
        Ok(())
    })
}

/// Copies the `B x image_dim` image features into `out` (capacity `cap`).
#[no_mangle]
pub unsafe extern "C" fn lu_unit_set_image_features(set: *const LuUnitSet, out: *mut f64, cap: usize) -> LuStatus {
    guard(|| {
        let s = reference(set, "set")?;
        let flat: Vec<f64> = s.0.units.iter().flat_map(|u| u.image_feature.iter().copied()).collect();
        copy_into(&flat, slice_mut(out, cap, "out")?)
    })
}

/// Copies the `B x 10` point statistics into `out` (capacity `cap`).
#[no_mangle]
pub unsafe extern "C" fn lu_unit_set_point_stats(set: *const LuUnitSet, out: *mut f64, cap: usize) -> LuStatus {
    guard(|| {
        let s = reference(set, "set")?;
        let flat: Vec<f64> = s.0.units.iter().flat_map(|u| u.point_stats.iter().copied()).collect();
        debug_assert_eq!(flat.len(), s.0.len() * STATS_DIM);
        copy_into(&flat, slice_mut(out, cap, "out")?)
    })
}

/// Number of member points of unit `index`.
#[no_mangle]
pub unsafe extern "C" fn lu_unit_set_member_count(set: *const LuUnitSet, index: usize, out: *mut usize) -> LuStatus {
    guard(|| {
        let s = reference(set, "set")?;
        let u = s.0.units.get(index).ok_or_else(|| Error::Invalid(format!("unit {index} out of range")))?;
        *slice_mut(out, 1, "out")?.first_mut().expect("one slot") = u.members.len();
        Ok(())
    })
}

/// Copies the ascending member indices of unit `index` into `out`.
#[no_mangle]
pub unsafe extern "C" fn lu_unit_set_members(set: *const LuUnitSet, index: usize, out: *mut usize, cap: usize) -> LuStatus {
    guard(|| {
        let s = reference(set, "set")?;
        let u = s.0.units.get(index).ok_or_else(|| Error::Invalid(format!("unit {index} out of range")))?;
        copy_into(&u.members, slice_mut(out, cap, "out")?)
    })
}

/// The unit set as JSON, identical to the CLI `units` output. Release with
/// [`lu_string_free`].
#[no_mangle]
pub unsafe extern "C" fn lu_unit_set_to_json(set: *const LuUnitSet, out: *mut *mut c_char) -> LuStatus {
    guard(|| {
        let s = reference(set, "set")?;
        put_string(out, to_json_bytes(&s.0)?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn lu_unit_set_free(set: *mut LuUnitSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Similarity-balanced negative sets over `rows x dim` image features.
/// `budget` 0 selects the default of half the batch.
#[no_mangle]
pub unsafe extern "C" fn lu_negative_sets(
    features: *const f64,
    rows: usize,
    dim: usize,
    budget: usize,
    out: *mut *mut LuNegativeSets,
) -> LuStatus {
    guard(|| {
        let data = slice(features, rows.saturating_mul(dim), "features")?.to_vec();
        let m = FeatureMatrix::new(rows, dim, data)?;
        let budget = if budget == 0 { default_budget(rows) } else { budget };
        put(out, LuNegativeSets(negative_sets(&similarity_matrix(&m)?, budget)?), "out")
    })
}

/// Negative sets from explicit lists in CSR layout: set `i` is
/// `indices[offsets[i]..offsets[i + 1]]`, so `offsets` has `rows + 1`
/// entries.
#[no_mangle]
pub unsafe extern "C" fn lu_negative_sets_from_lists(
    offsets: *const usize,
    indices: *const usize,
    rows: usize,
    out: *mut *mut LuNegativeSets,
) -> LuStatus {
    guard(|| {
        let offs = slice(offsets, rows + 1, "offsets")?;
        let total = *offs.last().expect("rows + 1 entries");
        let idx = slice(indices, total, "indices")?;
        let mut sets = Vec::with_capacity(rows);
        for w in offs.windows(2) {
            if w[0] > w[1] || w[1] > total {
                return Err(Error::Invalid("offsets must be non-decreasing and end at the index count".into()).into());
            }
            sets.push(idx[w[0]..w[1]].to_vec());
        }
        let budget = sets.iter().map(Vec::len).max().unwrap_or(0);
        let ns = NegativeSets { budget, sets };
        ns.validate(rows)?;
        put(out, LuNegativeSets(ns), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn lu_negative_sets_len(sets: *const LuNegativeSets, out: *mut usize) -> LuStatus {
    guard(|| {
        let s = reference(sets, "sets")?;
        *slice_mut(out, 1, "out")?.first_mut().expect("one slot") = s.0.sets.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lu_negative_sets_set_len(sets: *const LuNegativeSets, index: usize, out: *mut usize) -> LuStatus {
    guard(|| {
        let s = reference(sets, "sets")?;
        let set = s.0.sets.get(index).ok_or_else(|| Error::Invalid(format!("set {index} out of range")))?;
        *slice_mut(out, 1, "out")?.first_mut().expect("one slot") = set.len();
        Ok(())
    })
}

/// Copies the ascending indices of set `index` into `out`.
#[no_mangle]
pub unsafe extern "C" fn lu_negative_sets_get(
    sets: *const LuNegativeSets,
    index: usize,
    out: *mut usize,
    cap: usize,
) -> LuStatus {
    guard(|| {
        let s = reference(sets, "sets")?;
        let set = s.0.sets.get(index).ok_or_else(|| Error::Invalid(format!("set {index} out of range")))?;
        copy_into(set, slice_mut(out, cap, "out")?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn lu_negative_sets_free(sets: *mut LuNegativeSets) {
    if !sets.is_null() {
        drop(Box::from_raw(sets));
    }
}

/// Bidirectional InfoNCE over `rows x dim` point and image features. The
/// gradient buffers (each `rows x dim`) may be null when not wanted.
#[no_mangle]
pub unsafe extern "C" fn lu_infonce(
    point: *const f64,
    image: *const f64,
    rows: usize,
    dim: usize,
    sets: *const LuNegativeSets,
    tau: f64,
    out_value: *mut f64,
    grad_point: *mut f64,
    grad_image: *mut f64,
) -> LuStatus {
    guard(|| {
        let n = rows.saturating_mul(dim);
        let p = FeatureMatrix::new(rows, dim, slice(point, n, "point")?.to_vec())?;
        let i = FeatureMatrix::new(rows, dim, slice(image, n, "image")?.to_vec())?;
        let s = reference(sets, "sets")?;
        let loss = infonce(&p, &i, &s.0, tau)?;
        *slice_mut(out_value, 1, "out_value")?.first_mut().expect("one slot") = loss.value;
        if !grad_point.is_null() {
            copy_into(loss.grad_point.data(), slice_mut(grad_point, n, "grad_point")?)?;
        }
        if !grad_image.is_null() {
            copy_into(loss.grad_image.data(), slice_mut(grad_image, n, "grad_image")?)?;
        }
        Ok(())
    })
}

/// Runs pre-training from a run configuration (null for defaults).
#[no_mangle]
pub unsafe extern "C" fn lu_run_pretrain(config_json: *const c_char, out: *mut *mut LuTrace) -> LuStatus {
    guard(|| {
        let cfg = config_or_default(if config_json.is_null() { None } else { Some(string(config_json, "config_json")?) })?;
        put(out, LuTrace(run_pretrain(&cfg)?), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn lu_trace_len(trace: *const LuTrace, out: *mut usize) -> LuStatus {
    guard(|| {
        let t = reference(trace, "trace")?;
        *slice_mut(out, 1, "out")?.first_mut().expect("one slot") = t.0.records.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lu_trace_record(trace: *const LuTrace, index: usize, out: *mut LuStepRecord) -> LuStatus {
    guard(|| {
        let t = reference(trace, "trace")?;
        let r = t.0.records.get(index).ok_or_else(|| Error::Invalid(format!("record {index} out of range")))?;
        *slice_mut(out, 1, "out")?.first_mut().expect("one slot") = LuStepRecord {
            step: r.step,
            loss: r.loss,
            contrastive_accuracy: r.contrastive_accuracy,
            alignment_score: r.alignment_score,
            units: r.units,
        };
        Ok(())
    })
}

/// The trace as JSON lines, identical to the CLI `trace.jsonl`.
#[no_mangle]
pub unsafe extern "C" fn lu_trace_to_jsonl(trace: *const LuTrace, out: *mut *mut c_char) -> LuStatus {
    guard(|| {
        let t = reference(trace, "trace")?;
        put_string(out, trace_to_jsonl(&t.0.records)?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn lu_trace_free(trace: *mut LuTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}
