//! C ABI over the additive-regression fitter.
//!
//! Conventions:
//! * A fit lives behind an opaque `SbfitFit` pointer; release it with
//!   [`sbfit_fit_free`].
//! * Fallible calls return an [`SbfitStatus`]; anything but `Ok` leaves a
//!   message retrievable through [`sbfit_last_error`].
//! * Every entry point catches panics and turns them into
//!   `SbfitStatus::Panic` — nothing unwinds across the boundary.

use sbfit::{fit, predict, AdditiveFit, Error, ErrorCategory, FitOptions, Grid1D};
use std::cell::RefCell;
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Result of a fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbfitStatus {
    /// The call succeeded.
    Ok = 0,
    /// Invalid options or dimensions.
    Config = 1,
    /// Invalid sample values.
    Data = 2,
    /// The computation broke down numerically.
    Numerical = 3,
    /// File-system failure (unused by this interface, reserved).
    Io = 4,
    /// A required pointer argument was null.
    NullArgument = 5,
    /// An internal invariant failed; the library state is still sound.
    Panic = 6,
}

/// Kernel boundary handling, mirroring the library's two modes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbfitKernelMode {
    /// Linear boundary correction near the interval ends.
    Corrected = 0,
    /// Plain rescaled kernel everywhere.
    Conventional = 1,
}

/// Which centering convention the returned components satisfy.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbfitNorming {
    /// Zero mean against the adjusted density estimate.
    AdjustedDensity = 0,
    /// Zero mean against the raw density estimate.
    RawDensity = 1,
    /// Zero mean over the observed sample.
    SampleMean = 2,
}

/// An opaque fitted model.
pub struct SbfitFit {
    inner: AdditiveFit,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend_from_slice(msg.as_bytes());
        e.push(0);
    });
}

fn clear_error() {
    LAST_ERROR.with(|e| e.borrow_mut().clear());
}

fn report(err: &Error) -> SbfitStatus {
    set_error(&err.to_string());
    match err.category() {
        ErrorCategory::Config => SbfitStatus::Config,
        ErrorCategory::Data => SbfitStatus::Data,
        ErrorCategory::Numerical => SbfitStatus::Numerical,
        ErrorCategory::Io => SbfitStatus::Io,
    }
}

fn null_argument(name: &str) -> SbfitStatus {
    set_error(&format!("null pointer passed for '{name}'"));
    SbfitStatus::NullArgument
}

/// Run a closure with panics converted to `SbfitStatus::Panic`.
fn guarded(body: impl FnOnce() -> SbfitStatus) -> SbfitStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown internal failure".into());
            set_error(&format!("internal failure: {msg}"));
            SbfitStatus::Panic
        }
    }
}

/// Copy the message of the most recent failure on this thread into `buf`
/// (NUL-terminated, truncated to `cap` bytes) and return the full message
/// length including the terminator. Returns 0 when no failure is recorded.
/// Pass a null `buf` or zero `cap` to query the length alone.
#[no_mangle]
pub extern "C" fn sbfit_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if e.is_empty() {
            return 0;
        }
        if !buf.is_null() && cap > 0 {
            let take = e.len().min(cap);
            unsafe {
                std::ptr::copy_nonoverlapping(e.as_ptr() as *const c_char, buf, take);
                // force termination even when truncating
                *buf.add(take - 1) = 0;
            }
        }
        e.len()
    })
}

/// Fit an additive model and hand back an owned handle through `out`.
///
/// `covariates` holds `n * d` values in column-major order (all of
/// covariate 1, then all of covariate 2, ...). `intervals` holds `2 * d`
/// values as per-covariate `lo, hi` pairs declaring each axis's domain;
/// `bandwidths` holds `d` kernel scales. Every component curve is
/// evaluated on `grid_size` equally spaced points across its interval.
///
/// On success `*out` owns the fit and must be released with
/// [`sbfit_fit_free`]; on failure `*out` is untouched.
#[no_mangle]
pub extern "C" fn sbfit_fit_create(
    covariates: *const f64,
    responses: *const f64,
    n: usize,
    d: usize,
    intervals: *const f64,
    bandwidths: *const f64,
    grid_size: usize,
    kernel_mode: SbfitKernelMode,
    norming: SbfitNorming,
    tol: f64,
    max_sweeps: usize,
    out: *mut *mut SbfitFit,
) -> SbfitStatus {
    guarded(|| {
        clear_error();
        if covariates.is_null() {
            return null_argument("covariates");
        }
        if responses.is_null() {
            return null_argument("responses");
        }
        if intervals.is_null() {
            return null_argument("intervals");
        }
        if bandwidths.is_null() {
            return null_argument("bandwidths");
        }
        if out.is_null() {
            return null_argument("out");
        }
        if n == 0 || d == 0 {
            set_error("sample size and dimension must both be positive");
            return SbfitStatus::Config;
        }
        let flat = unsafe { std::slice::from_raw_parts(covariates, n * d) };
        let responses = unsafe { std::slice::from_raw_parts(responses, n) };
        let intervals = unsafe { std::slice::from_raw_parts(intervals, 2 * d) };
        let bandwidths = unsafe { std::slice::from_raw_parts(bandwidths, d) };
        if flat.iter().chain(responses).any(|v| !v.is_finite()) {
            set_error("sample contains non-finite values");
            return SbfitStatus::Data;
        }

        let columns: Vec<Vec<f64>> = (0..d).map(|j| flat[j * n..(j + 1) * n].to_vec()).collect();
        let grids = match (0..d)
            .map(|j| Grid1D::new(intervals[2 * j], intervals[2 * j + 1], grid_size))
            .collect::<sbfit::Result<Vec<_>>>()
        {
            Ok(g) => g,
            Err(e) => return report(&e),
        };
        let options = FitOptions {
            kernel_mode: match kernel_mode {
                SbfitKernelMode::Corrected => sbfit::KernelMode::Corrected,
                SbfitKernelMode::Conventional => sbfit::KernelMode::Conventional,
            },
            norming: match norming {
                SbfitNorming::AdjustedDensity => sbfit::Norming::AdjustedDensity,
                SbfitNorming::RawDensity => sbfit::Norming::RawDensity,
                SbfitNorming::SampleMean => sbfit::Norming::SampleMean,
            },
            tol,
            max_sweeps,
        };
        match fit(&columns, responses, &grids, bandwidths, &options) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(SbfitFit { inner })) };
                SbfitStatus::Ok
            }
            Err(e) => report(&e),
        }
    })
}

/// Release a fit handle. A null pointer is ignored.
#[no_mangle]
pub extern "C" fn sbfit_fit_free(fit: *mut SbfitFit) {
    if !fit.is_null() {
        drop(unsafe { Box::from_raw(fit) });
    }
}

/// Number of covariates of a fit, or 0 for a null handle.
#[no_mangle]
pub extern "C" fn sbfit_fit_dim(fit: *const SbfitFit) -> usize {
    if fit.is_null() {
        return 0;
    }
    unsafe { &*fit }.inner.components.len()
}

/// The fitted constant term, or NaN for a null handle.
#[no_mangle]
pub extern "C" fn sbfit_fit_intercept(fit: *const SbfitFit) -> f64 {
    if fit.is_null() {
        return f64::NAN;
    }
    unsafe { &*fit }.inner.intercept
}

/// Number of Gauss–Seidel sweeps the fit took, or 0 for a null handle.
#[no_mangle]
pub extern "C" fn sbfit_fit_sweeps(fit: *const SbfitFit) -> usize {
    if fit.is_null() {
        return 0;
    }
    unsafe { &*fit }.inner.sweeps
}

/// The final sup-norm residual of the sweep, or NaN for a null handle.
#[no_mangle]
pub extern "C" fn sbfit_fit_final_residual(fit: *const SbfitFit) -> f64 {
    if fit.is_null() {
        return f64::NAN;
    }
    unsafe { &*fit }.inner.final_residual
}

/// Grid length of component `j` (0-based), or 0 when out of range.
#[no_mangle]
pub extern "C" fn sbfit_fit_grid_len(fit: *const SbfitFit, j: usize) -> usize {
    if fit.is_null() {
        return 0;
    }
    let fit = unsafe { &*fit };
    fit.inner
        .components
        .get(j)
        .map_or(0, |c| c.grid().len())
}

/// Copy component `j`'s curve into caller buffers of length `len`: grid
/// nodes into `xs` and fitted values into `values`. Either buffer may be
/// null to skip it. `len` must equal [`sbfit_fit_grid_len`] for `j`.
#[no_mangle]
pub extern "C" fn sbfit_fit_component(
    fit: *const SbfitFit,
    j: usize,
    xs: *mut f64,
    values: *mut f64,
    len: usize,
) -> SbfitStatus {
    guarded(|| {
        clear_error();
        if fit.is_null() {
            return null_argument("fit");
        }
        let fit = unsafe { &*fit };
        let Some(curve) = fit.inner.components.get(j) else {
            set_error(&format!(
                "component index {j} out of range for a {}-dimensional fit",
                fit.inner.components.len()
            ));
            return SbfitStatus::Config;
        };
        if len != curve.grid().len() {
            set_error(&format!(
                "buffer length {len} does not match the {}-point grid",
                curve.grid().len()
            ));
            return SbfitStatus::Config;
        }
        if !xs.is_null() {
            unsafe { std::ptr::copy_nonoverlapping(curve.grid().points().as_ptr(), xs, len) };
        }
        if !values.is_null() {
            unsafe { std::ptr::copy_nonoverlapping(curve.values().as_ptr(), values, len) };
        }
        SbfitStatus::Ok
    })
}

/// Evaluate the fitted regression surface at one point (`d` coordinates,
/// matching the fit's dimension) and write the value to `out`. Coordinates
/// must lie inside their axis intervals.
#[no_mangle]
pub extern "C" fn sbfit_fit_predict(
    fit: *const SbfitFit,
    point: *const f64,
    d: usize,
    out: *mut f64,
) -> SbfitStatus {
    guarded(|| {
        clear_error();
        if fit.is_null() {
            return null_argument("fit");
        }
        if point.is_null() {
            return null_argument("point");
        }
        if out.is_null() {
            return null_argument("out");
        }
        let fit = unsafe { &*fit };
        if d != fit.inner.components.len() {
            set_error(&format!(
                "point has {d} coordinates but the fit has {} covariates",
                fit.inner.components.len()
            ));
            return SbfitStatus::Config;
        }
        let point = unsafe { std::slice::from_raw_parts(point, d) };
        match predict(&fit.inner, point) {
            Ok(v) => {
                unsafe { *out = v };
                SbfitStatus::Ok
            }
            Err(e) => report(&e),
        }
    })
}
