//! C ABI over robcd.
//!
//! Every fallible call returns a [`RobcdStatus`]; on failure the message is
//! available from [`robcd_last_error_message`] on the same thread. Handles
//! are opaque and must be released with their matching `_free` function.
//! Strings returned by the library are released with [`robcd_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use robcd::confidence::{
    build_cd, default_grid, refit_on_local_optimum, Alternative, ConfidenceObject, PivotKind, ProfileOptions,
};
use robcd::models::{model_from_name, Model, ModelOptions};
use robcd::scoring::{Fit, ScoringProblem};
use robcd::{Dataset, Error, ScoreRule};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RobcdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Parse = 3,
    Domain = 4,
    Numeric = 5,
    Optimization = 6,
    Singular = 7,
    Io = 8,
    Study = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RobcdPivot {
    Wald = 0,
    Root = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RobcdAlternative {
    Less = 0,
    Greater = 1,
    TwoSided = 2,
}

/// Observations with their sample or design layout.
pub struct RobcdDataset(Dataset);

/// A fitted model together with the data it was fitted to.
pub struct RobcdFit {
    model: Box<dyn Model>,
    data: Dataset,
    fit: Fit,
}

/// A confidence distribution on a grid.
pub struct RobcdCd(ConfidenceObject);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> RobcdStatus {
    match e {
        Error::Domain(_) => RobcdStatus::Domain,
        Error::Quadrature { .. } | Error::Numeric(_) | Error::LocalOptimum { .. } => RobcdStatus::Numeric,
        Error::Singular { .. } => RobcdStatus::Singular,
        Error::Optimization(_) => RobcdStatus::Optimization,
        Error::InvalidInput(_) => RobcdStatus::InvalidInput,
        Error::Parse { .. } | Error::Json(_) => RobcdStatus::Parse,
        Error::File { .. } | Error::Io(_) => RobcdStatus::Io,
        Error::Study(_) => RobcdStatus::Study,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, translating errors and panics into a status code.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> RobcdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RobcdStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            RobcdStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            RobcdStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    out.write(value);
    Ok(())
}

fn json_string<T: serde::Serialize>(value: &T) -> *mut c_char {
    match serde_json::to_string(value)
        .map_err(|e| e.to_string())
        .and_then(|s| CString::new(s).map_err(|e| e.to_string()))
    {
        Ok(s) => s.into_raw(),
        Err(e) => {
            set_error(&e);
            ptr::null_mut()
        }
    }
}

/// Message describing the last failure on this thread; empty after a
/// successful call. Valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn robcd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn robcd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Two independent samples.
///
/// # Safety
/// `x` and `y` must point to `nx` and `ny` readable doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn robcd_dataset_two_sample(
    x: *const f64,
    nx: usize,
    y: *const f64,
    ny: usize,
    out: *mut *mut RobcdDataset,
) -> RobcdStatus {
    guard(|| {
        let d = Dataset::two_sample(slice(x, nx, "x")?.to_vec(), slice(y, ny, "y")?.to_vec())?;
        put(out, Box::into_raw(Box::new(RobcdDataset(d))), "out")
    })
}

/// Regression responses with a row-major `n × p` design (include a column
/// of ones for an intercept).
///
/// # Safety
/// `y` must point to `n` doubles, `x` to `n * p` doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn robcd_dataset_regression(
    y: *const f64,
    n: usize,
    x: *const f64,
    p: usize,
    out: *mut *mut RobcdDataset,
) -> RobcdStatus {
    guard(|| {
        let y = slice(y, n, "y")?.to_vec();
        let len = n.checked_mul(p).ok_or(Error::InvalidInput("n * p overflows".into()))?;
        let x = nalgebra::DMatrix::from_row_slice(n, p, slice(x, len, "x")?);
        let d = Dataset::regression(y, &x, vec![])?;
        put(out, Box::into_raw(Box::new(RobcdDataset(d))), "out")
    })
}

/// # Safety
/// `d` must be NULL or a dataset handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn robcd_dataset_free(d: *mut RobcdDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Fits `model` (a model name as accepted by the command line) under the
/// Tsallis score with the given γ, or the log score when `gamma` is 0.
/// `interest` selects the regression coefficient; pass -1 otherwise.
///
/// # Safety
/// `data` must be a live dataset handle, `model` a NUL-terminated string,
/// and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn robcd_fit(
    data: *const RobcdDataset,
    model: *const c_char,
    gamma: f64,
    interest: i64,
    out: *mut *mut RobcdFit,
) -> RobcdStatus {
    guard(|| {
        let data = &handle(data, "data")?.0;
        if model.is_null() {
            return Err(Failure::Null("model"));
        }
        let name = CStr::from_ptr(model)
            .to_str()
            .map_err(|_| Error::InvalidInput("model name is not UTF-8".into()))?;
        let rule = if gamma == 0.0 {
            ScoreRule::Logarithmic
        } else {
            ScoreRule::tsallis(gamma)?
        };
        let opts = ModelOptions {
            interest: usize::try_from(interest).ok(),
            n_covariates: Some(data.n_covariates()),
            ..ModelOptions::default()
        };
        let m = model_from_name(name, &opts)?;
        let fit = ScoringProblem::new(m.as_ref(), rule, data)?.fit(None)?;
        if !fit.converged {
            return Err(Error::Optimization("fit did not converge".into()).into());
        }
        let h = RobcdFit {
            model: m,
            data: data.clone(),
            fit,
        };
        put(out, Box::into_raw(Box::new(h)), "out")
    })
}

/// Estimate and standard error of the interest parameter.
///
/// # Safety
/// `fit` must be a live fit handle; `psi` and `se` writable.
#[no_mangle]
pub unsafe extern "C" fn robcd_fit_interest(
    fit: *const RobcdFit,
    psi: *mut f64,
    se: *mut f64,
) -> RobcdStatus {
    guard(|| {
        let f = handle(fit, "fit")?;
        let part = robcd::confidence::fit_partition(f.model.as_ref(), &f.fit)?;
        put(psi, f.model.interest(&f.fit.theta_hat), "psi")?;
        put(se, part.g_psipsi.sqrt(), "se")
    })
}

/// Fit as a JSON document, or NULL on failure. Free with
/// [`robcd_string_free`].
///
/// # Safety
/// `fit` must be a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn robcd_fit_json(fit: *const RobcdFit) -> *mut c_char {
    let Some(f) = fit.as_ref() else {
        set_error("null pointer: fit");
        return ptr::null_mut();
    };
    match robcd::cli::fit_summary(f.model.as_ref(), &f.data, &f.fit) {
        Ok(s) => json_string(&s),
        Err(e) => {
            set_error(&e.to_string());
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `f` must be NULL or a fit handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn robcd_fit_free(f: *mut RobcdFit) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Confidence distribution of the interest parameter on the default grid
/// with `grid_points` points (201 when 0). If the profile reveals a better
/// optimum than the fit handle holds, the curve is built around that one.
///
/// # Safety
/// `fit` must be a live fit handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn robcd_cd_build(
    fit: *const RobcdFit,
    pivot: RobcdPivot,
    grid_points: usize,
    out: *mut *mut RobcdCd,
) -> RobcdStatus {
    guard(|| {
        let f = handle(fit, "fit")?;
        let problem = ScoringProblem::new(f.model.as_ref(), f.fit.rule, &f.data)?;
        let n = if grid_points == 0 { 201 } else { grid_points };
        let kind = match pivot {
            RobcdPivot::Wald => PivotKind::Wald,
            RobcdPivot::Root => PivotKind::Root,
        };
        let (_, cd) = refit_on_local_optimum(&problem, f.fit.clone(), |fit| {
            let grid = default_grid(f.model.as_ref(), fit, n)?;
            build_cd(&problem, fit, kind, &grid, &ProfileOptions::default())
        })?;
        put(out, Box::into_raw(Box::new(RobcdCd(cd))), "out")
    })
}

/// Reads a confidence object previously produced by [`robcd_cd_json`].
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn robcd_cd_from_json(
    json: *const c_char,
    out: *mut *mut RobcdCd,
) -> RobcdStatus {
    guard(|| {
        if json.is_null() {
            return Err(Failure::Null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| Error::InvalidInput("JSON is not UTF-8".into()))?;
        let cd: ConfidenceObject = serde_json::from_str(text).map_err(Error::from)?;
        put(out, Box::into_raw(Box::new(RobcdCd(cd))), "out")
    })
}

/// C(ψ).
///
/// # Safety
/// `cd` must be a live handle and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn robcd_cd_cdf(cd: *const RobcdCd, psi: f64, value: *mut f64) -> RobcdStatus {
    guard(|| put(value, handle(cd, "cd")?.0.cdf_at(psi), "value"))
}

/// Equal-tailed interval at `level`.
///
/// # Safety
/// `cd` must be a live handle; `lo` and `hi` writable.
#[no_mangle]
pub unsafe extern "C" fn robcd_cd_ci(
    cd: *const RobcdCd,
    level: f64,
    lo: *mut f64,
    hi: *mut f64,
) -> RobcdStatus {
    guard(|| {
        let iv = handle(cd, "cd")?.0.ci(level)?;
        put(lo, iv.lo, "lo")?;
        put(hi, iv.hi, "hi")
    })
}

/// p-value of H₀: ψ = ψ₀ against the given alternative.
///
/// # Safety
/// `cd` must be a live handle and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn robcd_cd_p_value(
    cd: *const RobcdCd,
    psi0: f64,
    alternative: RobcdAlternative,
    value: *mut f64,
) -> RobcdStatus {
    guard(|| {
        let alt = match alternative {
            RobcdAlternative::Less => Alternative::Less,
            RobcdAlternative::Greater => Alternative::Greater,
            RobcdAlternative::TwoSided => Alternative::TwoSided,
        };
        put(value, handle(cd, "cd")?.0.p_value(psi0, alt), "value")
    })
}

/// Confidence object as JSON, or NULL on failure. Free with
/// [`robcd_string_free`].
///
/// # Safety
/// `cd` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn robcd_cd_json(cd: *const RobcdCd) -> *mut c_char {
    match cd.as_ref() {
        Some(c) => json_string(&c.0),
        None => {
            set_error("null pointer: cd");
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `cd` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn robcd_cd_free(cd: *mut RobcdCd) {
    if !cd.is_null() {
        drop(Box::from_raw(cd));
    }
}
