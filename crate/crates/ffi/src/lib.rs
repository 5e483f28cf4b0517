//! C interface to saved `pce-ol` models.
//!
//! Every function returns a [`PceOlStatus`]; on failure a message is kept in
//! thread-local storage and [`pce_ol_last_error`] returns it. Matrices cross
//! the boundary as row-major `double` arrays. Pointers may be null only where
//! the matching count is zero.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use nalgebra::DMatrix;
use pce_ol::bench::config::RunConfig;
use pce_ol::bench::model_io::SavedModel;
use pce_ol::bench::pipeline::{run_fit, write_outcome};
use pce_ol::operator_fit::predict;
use pce_ol::uq_post::{predictive_mean, predictive_std};
use pce_ol::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PceOlStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad shape, out-of-domain point or invalid parameter.
    InvalidArgument = 2,
    Io = 3,
    /// Corrupt, truncated, mismatched or incompatible model file.
    Model = 4,
    Config = 5,
    /// Rank deficiency, non-convergence or a failed reference solve.
    Fit = 6,
    Panic = 7,
}

/// A loaded model. Opaque to C.
pub struct PceOlModel {
    inner: SavedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> PceOlStatus {
    match e {
        Error::Io { .. } | Error::Csv(_) => PceOlStatus::Io,
        Error::Model(_) => PceOlStatus::Model,
        Error::Config(_) => PceOlStatus::Config,
        Error::Domain(_) | Error::Shape(_) | Error::Parameter(_) | Error::Overflow(_) => PceOlStatus::InvalidArgument,
        _ => PceOlStatus::Fit,
    }
}

struct Fail(PceOlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PceOlStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PceOlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PceOlStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            PceOlStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(PceOlStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn model_ref<'a>(m: *const PceOlModel) -> Result<&'a SavedModel, Fail> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn checked_len(a: usize, b: usize) -> Result<usize, Fail> {
    a.checked_mul(b)
        .ok_or_else(|| Fail(PceOlStatus::InvalidArgument, "array size overflows".into()))
}

/// Message of the last failure on this thread; empty if none. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pce_ol_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pce_ol_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model file; `*out` receives a handle to release with
/// [`pce_ol_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pce_ol_model_load(path: *const c_char, out: *mut *mut PceOlModel) -> PceOlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let path = path_arg(path, "path")?;
        let inner = SavedModel::load(&path)?;
        *out = Box::into_raw(Box::new(PceOlModel { inner }));
        Ok(())
    })
}

/// Writes the model to `path` (atomically).
///
/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pce_ol_model_save(model: *const PceOlModel, path: *const c_char) -> PceOlStatus {
    guard(|| {
        let m = model_ref(model)?;
        m.save(&path_arg(path, "path")?)?;
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pce_ol_model_free(model: *mut PceOlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Basis sizes `Q`, `P` and input dimensions (spatio-temporal `d`,
/// stochastic `r`). Any output pointer may be null.
///
/// # Safety
/// Non-null pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pce_ol_model_dims(
    model: *const PceOlModel,
    q: *mut usize,
    p: *mut usize,
    d: *mut usize,
    r: *mut usize,
) -> PceOlStatus {
    guard(|| {
        let c = &model_ref(model)?.coefficients;
        for (ptr, v) in [(q, c.q()), (p, c.p()), (d, c.set_b.dim()), (r, c.set_a.dim())] {
            if let Some(slot) = ptr.as_mut() {
                *slot = v;
            }
        }
        Ok(())
    })
}

/// Surrogate values at `n_points` points (`n_points × d`) for `n_samples`
/// draws of `ξ` (`n_samples × r`); `out` is `n_points × n_samples`.
///
/// # Safety
/// Arrays must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn pce_ol_model_predict(
    model: *const PceOlModel,
    points: *const f64,
    n_points: usize,
    xi: *const f64,
    n_samples: usize,
    out: *mut f64,
) -> PceOlStatus {
    guard(|| {
        let m = model_ref(model)?;
        let c = &m.coefficients;
        let d = c.set_b.dim();
        let r = c.set_a.dim();
        let pts = slice_arg(points, checked_len(n_points, d)?, "points")?;
        let xs = slice_arg(xi, checked_len(n_samples, r)?, "xi")?;
        let out = out_slice(out, checked_len(n_points, n_samples)?, "out")?;
        let s = predict(
            c,
            &DMatrix::from_row_slice(n_points, d, pts),
            &DMatrix::from_row_slice(n_samples, r, xs),
        )?;
        for i in 0..n_points {
            for j in 0..n_samples {
                out[i * n_samples + j] = s[(i, j)];
            }
        }
        Ok(())
    })
}

unsafe fn moment(
    model: *const PceOlModel,
    points: *const f64,
    n_points: usize,
    out: *mut f64,
    f: fn(&pce_ol::operator_fit::CoefficientMatrix, &DMatrix<f64>) -> pce_ol::Result<Vec<f64>>,
) -> PceOlStatus {
    guard(|| {
        let c = &model_ref(model)?.coefficients;
        let d = c.set_b.dim();
        let pts = slice_arg(points, checked_len(n_points, d)?, "points")?;
        let out = out_slice(out, n_points, "out")?;
        let v = f(c, &DMatrix::from_row_slice(n_points, d, pts))?;
        out.copy_from_slice(&v);
        Ok(())
    })
}

/// Predictive mean at each point.
///
/// # Safety
/// `points` holds `n_points × d` values, `out` has room for `n_points`.
#[no_mangle]
pub unsafe extern "C" fn pce_ol_model_mean(
    model: *const PceOlModel,
    points: *const f64,
    n_points: usize,
    out: *mut f64,
) -> PceOlStatus {
    moment(model, points, n_points, out, predictive_mean)
}

/// Predictive standard deviation at each point.
///
/// # Safety
/// `points` holds `n_points × d` values, `out` has room for `n_points`.
#[no_mangle]
pub unsafe extern "C" fn pce_ol_model_std(
    model: *const PceOlModel,
    points: *const f64,
    n_points: usize,
    out: *mut f64,
) -> PceOlStatus {
    moment(model, points, n_points, out, predictive_std)
}

/// Runs the fit pipeline for a TOML run configuration. When `out_dir` is
/// non-null the model, report and CSVs are written there. `model_out` (may
/// be null) receives the fitted model, `mse_out` (may be null) the test MSE.
///
/// # Safety
/// String arguments must be NUL-terminated; output pointers writable.
#[no_mangle]
pub unsafe extern "C" fn pce_ol_fit(
    config_path: *const c_char,
    out_dir: *const c_char,
    model_out: *mut *mut PceOlModel,
    mse_out: *mut f64,
) -> PceOlStatus {
    guard(|| {
        if let Some(slot) = model_out.as_mut() {
            *slot = std::ptr::null_mut();
        }
        let cfg = RunConfig::load(&path_arg(config_path, "config_path")?)?;
        let run = cfg.resolve()?;
        let outcome = run_fit(&run, None)?;
        if !out_dir.is_null() {
            write_outcome(&outcome, &run.problem, &path_arg(out_dir, "out_dir")?)?;
        }
        if let Some(slot) = mse_out.as_mut() {
            *slot = outcome.report.mse;
        }
        if let Some(slot) = model_out.as_mut() {
            *slot = Box::into_raw(Box::new(PceOlModel { inner: outcome.model }));
        }
        Ok(())
    })
}
