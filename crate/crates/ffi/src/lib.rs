//! C ABI over the slicereg registration library.
//!
//! Every object crosses the boundary as an opaque handle that the caller
//! releases with the matching `*_free`. Functions return an [`SrStatus`];
//! on failure [`sr_last_error`] describes what went wrong on this thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use slicereg::config::{read_config, PipelineConfig};
use slicereg::geom::{BinaryVolume, Mask2, MaskStack, TransformParams, Volume};
use slicereg::hull::{intersection_test, per_slice_transforms, Classification};
use slicereg::io;
use slicereg::joint::mse_cost;
use slicereg::workflow::register;
use slicereg::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    ParameterBinding = 4,
    Io = 5,
    Format = 6,
    Diverged = 7,
    Degenerate = 8,
    Undefined = 9,
    Panic = 10,
}

/// Binary CT segmentation.
pub struct SrVolume(BinaryVolume);
/// Photo masks with their slice indices.
pub struct SrStack(MaskStack);
/// Pipeline configuration.
pub struct SrConfig(PipelineConfig);
/// Registration result for a whole stack.
pub struct SrTransform(TransformParams);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SrStatus {
    match e {
        Error::InvalidInput(_) => SrStatus::InvalidInput,
        Error::DimensionMismatch(_) => SrStatus::DimensionMismatch,
        Error::ParameterBinding(_) | Error::SliceOutsideSolid(_) => SrStatus::ParameterBinding,
        Error::NoBimodalStructure | Error::DegenerateHull(_) => SrStatus::Degenerate,
        Error::Diverged { .. } => SrStatus::Diverged,
        Error::UndefinedMetric(_) => SrStatus::Undefined,
        Error::Format { .. } | Error::MissingKey(_) => SrStatus::Format,
        Error::Io { .. } => SrStatus::Io,
    }
}

struct Fail(SrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SrStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SrStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(SrStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Fail(SrStatus::InvalidInput, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sr_volume_read(path: *const c_char, out: *mut *mut SrVolume) -> SrStatus {
    guard(|| {
        let vol = io::read_binary_volume(&path_arg(path)?)?;
        emit(out, SrVolume(vol))
    })
}

/// Builds a volume from `dims[0]*dims[1]*dims[2]` bytes, x fastest; any
/// nonzero byte is inside.
///
/// # Safety
/// `dims` must point to 3 values and `data` to the full voxel count.
#[no_mangle]
pub unsafe extern "C" fn sr_volume_from_data(dims: *const usize, voxel_size: f64, data: *const u8, out: *mut *mut SrVolume) -> SrStatus {
    guard(|| {
        let d = std::slice::from_raw_parts(borrow(dims, "dims")?, 3);
        let d = [d[0], d[1], d[2]];
        let n = d.iter().try_fold(1usize, |a, &b| a.checked_mul(b)).ok_or_else(|| Fail(SrStatus::InvalidInput, "volume too large".into()))?;
        let bytes = std::slice::from_raw_parts(borrow(data, "data")?, n);
        let vol = Volume::new(d, voxel_size, bytes.iter().map(|&b| u8::from(b != 0)).collect())?;
        emit(out, SrVolume(vol))
    })
}

/// # Safety
/// `vol` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn sr_volume_free(vol: *mut SrVolume) {
    release(vol);
}

/// Reads every image in a directory as one photo mask.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sr_stack_read_dir(dir: *const c_char, out: *mut *mut SrStack) -> SrStatus {
    guard(|| {
        let stack = io::read_mask_dir(&path_arg(dir)?)?;
        emit(out, SrStack(stack))
    })
}

/// Builds a stack of `count` masks of `width*height` bytes each, row-major,
/// laid out one after another. `indices` may be NULL for 0..count.
///
/// # Safety
/// `data` must hold `count*width*height` bytes and `indices`, when given,
/// `count` values.
#[no_mangle]
pub unsafe extern "C" fn sr_stack_from_data(
    width: usize,
    height: usize,
    count: usize,
    data: *const u8,
    indices: *const i64,
    out: *mut *mut SrStack,
) -> SrStatus {
    guard(|| {
        let px = width.checked_mul(height).ok_or_else(|| Fail(SrStatus::InvalidInput, "mask too large".into()))?;
        let total = px.checked_mul(count).ok_or_else(|| Fail(SrStatus::InvalidInput, "stack too large".into()))?;
        let bytes = std::slice::from_raw_parts(borrow(data, "data")?, total);
        let masks = (0..count)
            .map(|k| Mask2::new(width, height, bytes[k * px..(k + 1) * px].iter().map(|&b| u8::from(b != 0)).collect()))
            .collect::<slicereg::Result<Vec<_>>>()?;
        let stack = if indices.is_null() {
            MaskStack::sequential(masks)?
        } else {
            MaskStack::new(masks, std::slice::from_raw_parts(indices, count).to_vec())?
        };
        emit(out, SrStack(stack))
    })
}

/// Number of slices, or 0 for NULL.
///
/// # Safety
/// `stack` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn sr_stack_len(stack: *const SrStack) -> usize {
    stack.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `stack` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn sr_stack_free(stack: *mut SrStack) {
    release(stack);
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_config_default(out: *mut *mut SrConfig) -> SrStatus {
    guard(|| emit(out, SrConfig(PipelineConfig::default())))
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sr_config_read(path: *const c_char, out: *mut *mut SrConfig) -> SrStatus {
    guard(|| {
        let cfg = read_config(&path_arg(path)?)?;
        emit(out, SrConfig(cfg))
    })
}

/// Pixel stride used by both joint and per-slice optimization.
///
/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn sr_config_set_stride(cfg: *mut SrConfig, stride: usize) -> SrStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("config"))?;
        if stride == 0 {
            return Err(Fail(SrStatus::InvalidInput, "stride must be at least 1".into()));
        }
        cfg.0.joint.stride = stride;
        cfg.0.separate.stride = stride;
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn sr_config_free(cfg: *mut SrConfig) {
    release(cfg);
}

/// Profile initialization followed by joint optimization. `cfg` may be NULL
/// for the defaults.
///
/// # Safety
/// Handles must come from this library and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_register(stack: *const SrStack, ct: *const SrVolume, cfg: *const SrConfig, out: *mut *mut SrTransform) -> SrStatus {
    guard(|| {
        let default;
        let cfg = match cfg.as_ref() {
            Some(c) => &c.0,
            None => {
                default = PipelineConfig::default();
                &default
            }
        };
        let reg = register(&borrow(stack, "stack")?.0, &borrow(ct, "volume")?.0, cfg)?;
        emit(out, SrTransform(reg.trace.final_theta))
    })
}

/// Reads the first transform of a θ JSON document.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sr_transform_read(path: *const c_char, out: *mut *mut SrTransform) -> SrStatus {
    guard(|| {
        let path = path_arg(path)?;
        let mut all = io::read_theta(&path)?;
        if all.len() != 1 {
            return Err(Fail(SrStatus::Format, format!("{}: expected one transform, found {}", path.display(), all.len())));
        }
        emit(out, SrTransform(all.remove(0)))
    })
}

/// # Safety
/// `t` must come from this library and `path` be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sr_transform_write(t: *const SrTransform, path: *const c_char) -> SrStatus {
    guard(|| {
        let t = borrow(t, "transform")?;
        io::write_theta(&path_arg(path)?, std::slice::from_ref(&t.0))?;
        Ok(())
    })
}

/// Writes rotation x, y, z (radians), scaling, spacing and z offset.
///
/// # Safety
/// `t` must come from this library and `out` hold 6 values.
#[no_mangle]
pub unsafe extern "C" fn sr_transform_params(t: *const SrTransform, out: *mut f64) -> SrStatus {
    guard(|| {
        let t = &borrow(t, "transform")?.0;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let v = [t.rotation_x, t.rotation_y, t.rotation_z, t.scaling, t.spacing, t.offset_z];
        ptr::copy_nonoverlapping(v.as_ptr(), out, 6);
        Ok(())
    })
}

/// Number of per-slice offsets, or 0 for NULL.
///
/// # Safety
/// `t` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn sr_transform_slice_count(t: *const SrTransform) -> usize {
    t.as_ref().map_or(0, |t| t.0.per_slice_offsets.len())
}

/// Slice index and in-plane offset of slice ordinal `k`.
///
/// # Safety
/// `t` must come from this library; the output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_transform_slice_offset(t: *const SrTransform, k: usize, index: *mut i64, offset_x: *mut f64, offset_y: *mut f64) -> SrStatus {
    guard(|| {
        let t = &borrow(t, "transform")?.0;
        let o = t
            .per_slice_offsets
            .get(k)
            .ok_or_else(|| Fail(SrStatus::InvalidInput, format!("slice ordinal {k} out of range")))?;
        if index.is_null() || offset_x.is_null() || offset_y.is_null() {
            return Err(null("output pointer"));
        }
        *index = o.index;
        *offset_x = o.offset_x;
        *offset_y = o.offset_y;
        Ok(())
    })
}

/// # Safety
/// `t` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn sr_transform_free(t: *mut SrTransform) {
    release(t);
}

/// Mean squared mask disagreement over every `stride`-th photo pixel.
///
/// # Safety
/// Handles must come from this library and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_cost(stack: *const SrStack, ct: *const SrVolume, t: *const SrTransform, stride: usize, out: *mut f64) -> SrStatus {
    guard(|| {
        let c = mse_cost(&borrow(stack, "stack")?.0, &borrow(ct, "volume")?.0, &borrow(t, "transform")?.0, stride)?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = c;
        Ok(())
    })
}

/// Runs the neighbour-hull test for a joint transform. `flagged` receives
/// the number of intersecting slices and `classification` 0 (none),
/// 1 (at most three, adjacent) or 2 (anything else).
///
/// # Safety
/// Handles must come from this library and outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_intersect(stack: *const SrStack, t: *const SrTransform, flagged: *mut usize, classification: *mut i32) -> SrStatus {
    guard(|| {
        let stack = &borrow(stack, "stack")?.0;
        let t = &borrow(t, "transform")?.0;
        t.check_bound(stack)?;
        let report = intersection_test(stack, &per_slice_transforms(t), &Default::default())?;
        if flagged.is_null() || classification.is_null() {
            return Err(null("output pointer"));
        }
        *flagged = report.flagged();
        *classification = match report.classification {
            Classification::NoIntersections => 0,
            Classification::AtMost3Adjacent => 1,
            Classification::More => 2,
        };
        Ok(())
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
