//! C ABI over the patchsel restoration pipeline.
//!
//! Every function returns a [`PsStatus`]. On failure a message is kept per
//! thread and can be read with [`ps_last_error`]. Images are planar RGB
//! (`3 * height * width` doubles, channel-major) and raw mosaics are
//! `height * width` doubles, all on the [0, 1] scale.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use patchsel::eval::Restorer;
use patchsel::image::{Image, Raw};
use patchsel::mosaic::{self, BayerPattern};
use patchsel::training::Checkpoint;
use patchsel::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Parse = 4,
    Io = 5,
    NonFinite = 6,
    Internal = 7,
    Panic = 8,
}

/// A loaded restoration model. Create with [`ps_restorer_open`] or
/// [`ps_restorer_bilinear`], release with [`ps_restorer_free`].
pub struct PsRestorer {
    inner: Restorer,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> PsStatus {
    match e {
        Error::Shape(_) => PsStatus::Shape,
        Error::Config(_) | Error::Usage(_) => PsStatus::InvalidArgument,
        Error::Parse { .. } => PsStatus::Parse,
        Error::NonFinite(_) => PsStatus::NonFinite,
        Error::Io { .. } => PsStatus::Io,
        Error::Internal(_) => PsStatus::Internal,
    }
}

struct Fail(PsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside patchsel".into());
            PsStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(PsStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

fn elements(height: usize, width: usize, channels: usize) -> Result<usize, Fail> {
    height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(channels))
        .filter(|&n| n > 0)
        .ok_or_else(|| Fail(PsStatus::Shape, format!("bad dimensions {height}x{width}")))
}

unsafe fn pattern_arg(p: *const c_char) -> Result<BayerPattern, Fail> {
    non_null(p, "pattern")?;
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(PsStatus::InvalidArgument, "pattern is not UTF-8".into()))?;
    Ok(BayerPattern::parse(s)?)
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ps_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// PSNR in dB between two buffers of `len` samples, clamped to [0, 1],
/// with a peak of 1. Identical inputs give the 100 dB cap.
///
/// # Safety
/// `a` and `b` must each point to `len` readable doubles and `out` to one
/// writable double.
#[no_mangle]
pub unsafe extern "C" fn ps_psnr(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> PsStatus {
    guard(|| {
        non_null(a, "a")?;
        non_null(b, "b")?;
        non_null(out, "out")?;
        if len == 0 {
            return Err(Fail(PsStatus::Shape, "empty input".into()));
        }
        let (a, b) = (std::slice::from_raw_parts(a, len), std::slice::from_raw_parts(b, len));
        *out = mosaic::psnr_slices(a, b, 1.0)?;
        Ok(())
    })
}

/// Samples an RGB image through the colour filter array named by
/// `pattern` (`"rggb"`, `"bggr"`, `"grbg"` or `"gbrg"`).
///
/// # Safety
/// `rgb` must point to `3 * height * width` doubles, `raw_out` to
/// `height * width` writable doubles and `pattern` to a NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn ps_mosaic(
    rgb: *const f64,
    height: usize,
    width: usize,
    pattern: *const c_char,
    raw_out: *mut f64,
) -> PsStatus {
    guard(|| {
        non_null(rgb, "rgb")?;
        non_null(raw_out, "raw_out")?;
        let pattern = pattern_arg(pattern)?;
        let n = elements(height, width, 3)?;
        let image = Image::new(height, width, std::slice::from_raw_parts(rgb, n).to_vec())?;
        let raw = mosaic::mosaic_apply(&image, pattern)?;
        std::slice::from_raw_parts_mut(raw_out, n / 3).copy_from_slice(raw.data());
        Ok(())
    })
}

/// Bilinear demosaic of a raw mosaic into planar RGB.
///
/// # Safety
/// `raw` must point to `height * width` doubles, `rgb_out` to
/// `3 * height * width` writable doubles and `pattern` to a NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn ps_bilinear(
    raw: *const f64,
    height: usize,
    width: usize,
    pattern: *const c_char,
    rgb_out: *mut f64,
) -> PsStatus {
    guard(|| {
        non_null(raw, "raw")?;
        non_null(rgb_out, "rgb_out")?;
        let pattern = pattern_arg(pattern)?;
        let n = elements(height, width, 1)?;
        let raw = Raw::new(height, width, std::slice::from_raw_parts(raw, n).to_vec())?;
        let rgb = mosaic::bilinear_demosaic(&raw, pattern)?;
        std::slice::from_raw_parts_mut(rgb_out, 3 * n).copy_from_slice(rgb.data());
        Ok(())
    })
}

/// Loads the restoration network from a training checkpoint. Any
/// PatchNet weights in the file are ignored.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_restorer_open(path: *const c_char, out: *mut *mut PsRestorer) -> PsStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Fail(PsStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let ckpt = Checkpoint::load(Path::new(path))?;
        let inner = Restorer::from_checkpoint(&ckpt)?;
        *out = Box::into_raw(Box::new(PsRestorer { inner }));
        Ok(())
    })
}

/// A restorer that runs the bilinear baseline.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_restorer_bilinear(out: *mut *mut PsRestorer) -> PsStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = Box::into_raw(Box::new(PsRestorer {
            inner: Restorer::Bilinear,
        }));
        Ok(())
    })
}

/// Restores a noisy raw mosaic. `sigma_8bit` is the noise level on the
/// 8-bit scale; height and width must be even.
///
/// # Safety
/// `handle` must come from `ps_restorer_open` or `ps_restorer_bilinear`
/// and not be freed; buffers as for [`ps_bilinear`].
#[no_mangle]
pub unsafe extern "C" fn ps_restorer_run(
    handle: *const PsRestorer,
    raw: *const f64,
    height: usize,
    width: usize,
    sigma_8bit: f64,
    pattern: *const c_char,
    rgb_out: *mut f64,
) -> PsStatus {
    guard(|| {
        non_null(handle, "handle")?;
        non_null(raw, "raw")?;
        non_null(rgb_out, "rgb_out")?;
        if !(sigma_8bit >= 0.0) || !sigma_8bit.is_finite() {
            return Err(Fail(
                PsStatus::InvalidArgument,
                format!("sigma must be >= 0, got {sigma_8bit}"),
            ));
        }
        let pattern = pattern_arg(pattern)?;
        let n = elements(height, width, 1)?;
        let raw = Raw::new(height, width, std::slice::from_raw_parts(raw, n).to_vec())?;
        let rgb = (*handle)
            .inner
            .restore(&raw, mosaic::sigma_from_8bit(sigma_8bit), pattern)?;
        std::slice::from_raw_parts_mut(rgb_out, 3 * n).copy_from_slice(rgb.data());
        Ok(())
    })
}

/// Releases a restorer. NULL is accepted.
///
/// # Safety
/// `handle` must be NULL or a live pointer from this library.
#[no_mangle]
pub unsafe extern "C" fn ps_restorer_free(handle: *mut PsRestorer) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}
