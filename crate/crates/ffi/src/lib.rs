//! C ABI over contourkit.
//!
//! Volumes and masks are opaque heap handles released with their `_free`
//! function. Every fallible call returns a [`CkStatus`]; on failure the
//! thread-local message is available through [`ck_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use contourkit::annotate::{apply_stroke, paint_disc, paint_sphere, BrushMode, BrushStroke, LabelVolume};
use contourkit::geom::Vec3;
use contourkit::interp::interpolate_slices;
use contourkit::metrics::dsc;
use contourkit::render::{render_image, Camera, RenderSettings, TransferFunction};
use contourkit::volume::{read_volume, Axis, DensityWindow, Volume};
use contourkit::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    CorruptFile = 4,
    DimensionMismatch = 5,
    OutOfRange = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

/// Opaque volume handle.
pub struct CkVolume(Volume);

/// Opaque binary mask handle.
pub struct CkMask(LabelVolume);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(CkStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => CkStatus::Io,
            Error::CorruptFile { .. } | Error::VersionMismatch { .. } | Error::MalformedEvent { .. } => {
                CkStatus::CorruptFile
            }
            Error::DimensionMismatch { .. } | Error::GridSize { .. } => CkStatus::DimensionMismatch,
            Error::IndexOutOfRange { .. } => CkStatus::OutOfRange,
            Error::Png(_) => CkStatus::Internal,
            _ => CkStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: CkStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Runs `f`, recording its error message and mapping panics to `Internal`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            CkStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CkStatus::Internal
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(fail(CkStatus::NullPointer, "path is null"));
    }
    let s = unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| fail(CkStatus::InvalidArgument, "path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    unsafe { p.as_ref() }.ok_or_else(|| fail(CkStatus::NullPointer, format!("{what} is null")))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    unsafe { p.as_mut() }.ok_or_else(|| fail(CkStatus::NullPointer, format!("{what} is null")))
}

fn axis_arg(axis: u32) -> Result<Axis, Failure> {
    match axis {
        0 => Ok(Axis::Transverse),
        1 => Ok(Axis::Sagittal),
        2 => Ok(Axis::Coronal),
        _ => Err(fail(CkStatus::InvalidArgument, format!("axis {axis} (0 transverse, 1 sagittal, 2 coronal)"))),
    }
}

fn mode_arg(erase: bool) -> BrushMode {
    if erase { BrushMode::Erase } else { BrushMode::Paint }
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ck_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            unsafe {
                ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// Loads a volume from its metadata file (with the `.raw` payload beside it).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ck_volume_load(path: *const c_char, out: *mut *mut CkVolume) -> CkStatus {
    guard(|| {
        let out = unsafe { deref_mut(out, "out") }?;
        let v = read_volume(unsafe { path_arg(path) }?)?;
        *out = Box::into_raw(Box::new(CkVolume(v)));
        Ok(())
    })
}

/// Builds a volume from `dims[0] * dims[1] * dims[2]` densities in [0, 1],
/// x fastest.
///
/// # Safety
/// `dims` and `spacing` must point to three values, `data` to the full grid.
#[no_mangle]
pub unsafe extern "C" fn ck_volume_from_densities(
    dims: *const usize,
    spacing: *const f64,
    data: *const f32,
    out: *mut *mut CkVolume,
) -> CkStatus {
    guard(|| {
        let out = unsafe { deref_mut(out, "out") }?;
        if dims.is_null() || spacing.is_null() || data.is_null() {
            return Err(fail(CkStatus::NullPointer, "dims, spacing and data are required"));
        }
        let d = unsafe { [*dims, *dims.add(1), *dims.add(2)] };
        let s = unsafe { [*spacing, *spacing.add(1), *spacing.add(2)] };
        let n = d.iter().try_fold(1usize, |a, &b| a.checked_mul(b)).ok_or_else(|| fail(CkStatus::InvalidArgument, "dims overflow"))?;
        let grid = unsafe { std::slice::from_raw_parts(data, n) }.to_vec();
        if let Some(bad) = grid.iter().find(|d| !(0.0..=1.0).contains(*d)) {
            return Err(fail(CkStatus::InvalidArgument, format!("density {bad} outside [0, 1]")));
        }
        let v = Volume::from_densities(d, s, grid, (0.0, 1.0))?;
        *out = Box::into_raw(Box::new(CkVolume(v)));
        Ok(())
    })
}

/// # Safety
/// `v` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ck_volume_free(v: *mut CkVolume) {
    if !v.is_null() {
        drop(unsafe { Box::from_raw(v) });
    }
}

/// Writes the three grid dimensions to `out`.
///
/// # Safety
/// `v` must be a live handle and `out` valid for three values.
#[no_mangle]
pub unsafe extern "C" fn ck_volume_dims(v: *const CkVolume, out: *mut usize) -> CkStatus {
    guard(|| {
        let v = unsafe { deref(v, "volume") }?;
        if out.is_null() {
            return Err(fail(CkStatus::NullPointer, "out is null"));
        }
        for (i, d) in v.0.dims().into_iter().enumerate() {
            unsafe { *out.add(i) = d };
        }
        Ok(())
    })
}

/// Empty mask on the grid of `v`.
///
/// # Safety
/// `v` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ck_mask_new(v: *const CkVolume, out: *mut *mut CkMask) -> CkStatus {
    guard(|| {
        let v = unsafe { deref(v, "volume") }?;
        let out = unsafe { deref_mut(out, "out") }?;
        *out = Box::into_raw(Box::new(CkMask(LabelVolume::for_volume(&v.0))));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ck_mask_load(path: *const c_char, out: *mut *mut CkMask) -> CkStatus {
    guard(|| {
        let out = unsafe { deref_mut(out, "out") }?;
        let m = LabelVolume::load(unsafe { path_arg(path) }?)?;
        *out = Box::into_raw(Box::new(CkMask(m)));
        Ok(())
    })
}

/// # Safety
/// `m` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ck_mask_save(m: *const CkMask, path: *const c_char) -> CkStatus {
    guard(|| {
        let m = unsafe { deref(m, "mask") }?;
        m.0.save(unsafe { path_arg(path) }?)?;
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ck_mask_free(m: *mut CkMask) {
    if !m.is_null() {
        drop(unsafe { Box::from_raw(m) });
    }
}

/// Number of set voxels, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ck_mask_count(m: *const CkMask) -> usize {
    unsafe { m.as_ref() }.map_or(0, |m| m.0.count())
}

/// Paints (or erases) every voxel whose center lies within `radius_mm` of
/// `center` (millimeters, three values).
///
/// # Safety
/// Handles must be live; `center` must point to three values.
#[no_mangle]
pub unsafe extern "C" fn ck_paint_sphere(
    m: *mut CkMask,
    v: *const CkVolume,
    center: *const f64,
    radius_mm: f64,
    erase: bool,
) -> CkStatus {
    guard(|| {
        let m = unsafe { deref_mut(m, "mask") }?;
        let v = unsafe { deref(v, "volume") }?;
        if center.is_null() {
            return Err(fail(CkStatus::NullPointer, "center is null"));
        }
        let c = unsafe { [*center, *center.add(1), *center.add(2)] };
        paint_sphere(&mut m.0, &v.0, c, radius_mm, mode_arg(erase))?;
        Ok(())
    })
}

/// Paints (or erases) a disc on one slice; `center` is two in-plane millimeter
/// coordinates.
///
/// # Safety
/// Handles must be live; `center` must point to two values.
#[no_mangle]
pub unsafe extern "C" fn ck_paint_disc(
    m: *mut CkMask,
    v: *const CkVolume,
    axis: u32,
    index: usize,
    center: *const f64,
    radius_mm: f64,
    erase: bool,
) -> CkStatus {
    guard(|| {
        let m = unsafe { deref_mut(m, "mask") }?;
        let v = unsafe { deref(v, "volume") }?;
        if center.is_null() {
            return Err(fail(CkStatus::NullPointer, "center is null"));
        }
        let c = unsafe { [*center, *center.add(1)] };
        paint_disc(&mut m.0, &v.0, axis_arg(axis)?, index, c, radius_mm, mode_arg(erase))?;
        Ok(())
    })
}

/// Applies one stroke given as JSON (the same form the session log uses).
///
/// # Safety
/// Handles must be live; `json` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ck_apply_stroke_json(m: *mut CkMask, v: *const CkVolume, json: *const c_char) -> CkStatus {
    guard(|| {
        let m = unsafe { deref_mut(m, "mask") }?;
        let v = unsafe { deref(v, "volume") }?;
        if json.is_null() {
            return Err(fail(CkStatus::NullPointer, "json is null"));
        }
        let text = unsafe { CStr::from_ptr(json) }.to_str().map_err(|_| fail(CkStatus::InvalidArgument, "json is not UTF-8"))?;
        let stroke: BrushStroke =
            serde_json::from_str(text).map_err(|e| fail(CkStatus::InvalidArgument, format!("stroke: {e}")))?;
        apply_stroke(&mut m.0, &v.0, &stroke)?;
        Ok(())
    })
}

/// Fills the slices between consecutive `keys` along `axis`.
///
/// # Safety
/// Handles must be live; `keys` must point to `n_keys` values.
#[no_mangle]
pub unsafe extern "C" fn ck_interpolate(
    m: *mut CkMask,
    v: *const CkVolume,
    axis: u32,
    keys: *const usize,
    n_keys: usize,
) -> CkStatus {
    guard(|| {
        let m = unsafe { deref_mut(m, "mask") }?;
        let v = unsafe { deref(v, "volume") }?;
        if keys.is_null() && n_keys > 0 {
            return Err(fail(CkStatus::NullPointer, "keys is null"));
        }
        let keys = if n_keys == 0 { &[][..] } else { unsafe { std::slice::from_raw_parts(keys, n_keys) } };
        interpolate_slices(&mut m.0, &v.0, axis_arg(axis)?, keys)?;
        Ok(())
    })
}

/// Dice similarity of two masks on the same grid.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ck_dsc(a: *const CkMask, b: *const CkMask, out: *mut f64) -> CkStatus {
    guard(|| {
        let (a, b) = unsafe { (deref(a, "a")?, deref(b, "b")?) };
        let out = unsafe { deref_mut(out, "out") }?;
        *out = dsc(&a.0, &b.0)?;
        Ok(())
    })
}

/// Renders `v` (optionally tinted by `labels`) from an orbit camera into
/// `rgba`, which must hold `width * height * 4` bytes. A null `tf_json`
/// selects the grayscale ramp.
///
/// # Safety
/// `v` must be live, `labels` null or live, `tf_json` null or a
/// NUL-terminated string, and `rgba` valid for `rgba_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ck_render(
    v: *const CkVolume,
    labels: *const CkMask,
    tf_json: *const c_char,
    azimuth_deg: f64,
    elevation_deg: f64,
    width: usize,
    height: usize,
    rgba: *mut u8,
    rgba_len: usize,
) -> CkStatus {
    guard(|| {
        let v = unsafe { deref(v, "volume") }?;
        let labels = unsafe { labels.as_ref() }.map(|m| &m.0);
        let tf = if tf_json.is_null() {
            TransferFunction::default()
        } else {
            let text = unsafe { CStr::from_ptr(tf_json) }
                .to_str()
                .map_err(|_| fail(CkStatus::InvalidArgument, "tf_json is not UTF-8"))?;
            serde_json::from_str(text).map_err(|e| fail(CkStatus::InvalidArgument, format!("transfer function: {e}")))?
        };
        if rgba.is_null() {
            return Err(fail(CkStatus::NullPointer, "rgba is null"));
        }
        let need = width.checked_mul(height).and_then(|n| n.checked_mul(4)).unwrap_or(usize::MAX);
        if rgba_len < need {
            return Err(fail(CkStatus::BufferTooSmall, format!("rgba needs {need} bytes, got {rgba_len}")));
        }
        let v = &v.0;
        let cam = Camera::framing(Vec3::from(v.center_mm()), v.extent_mm(), azimuth_deg, elevation_deg, (width, height), None)?;
        let frame = render_image(v, labels, &tf, DensityWindow::FULL, &cam, RenderSettings::default())?;
        let bytes = frame.to_rgba8();
        unsafe { ptr::copy_nonoverlapping(bytes.as_ptr(), rgba, bytes.len()) };
        Ok(())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ck_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
