//! C interface to the `tisp` solver.
//!
//! Every function returns a [`TispStatus`]; on failure the message is kept in
//! thread-local storage and read with [`tisp_last_error_message`]. Handles
//! are opaque and owned by the caller once returned; free them with the
//! matching `_free` function. Matrices are dense row-major `n × p` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tisp::linalg::{DenseMatrix, DenseVector};
use tisp::solver::{self, Lambda, ScaleMode};
use tisp::thresholds::ThresholdRule;
use tisp::{Error, ErrorClass};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TispStatus {
    Ok = 0,
    /// Bad parameter or rule string.
    InvalidArgument = 1,
    /// Inconsistent or non-finite data.
    DataError = 2,
    NumericalError = 3,
    NullPointer = 4,
    /// Caller buffer too small.
    BufferTooSmall = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TispScale {
    Unscaled = 0,
    /// Scale by the spectral norm of X.
    Auto = 1,
    /// Use the `k` argument.
    Fixed = 2,
}

/// Opaque problem handle.
pub struct TispProblem {
    inner: solver::TispProblem,
}

/// Opaque fit handle.
pub struct TispResult {
    inner: solver::TispResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let clean = message.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).unwrap_or_default());
}

fn fail(status: TispStatus, message: &str) -> TispStatus {
    set_error(message);
    status
}

fn from_error(e: Error) -> TispStatus {
    let status = match e.class() {
        ErrorClass::Config => TispStatus::InvalidArgument,
        ErrorClass::Data => TispStatus::DataError,
        ErrorClass::Numerical => TispStatus::NumericalError,
    };
    fail(status, &e.to_string())
}

fn guard(body: impl FnOnce() -> TispStatus) -> TispStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => {
            if status == TispStatus::Ok {
                set_error("");
            }
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(TispStatus::Panic, &msg)
        }
    }
}

unsafe fn parse_rule(rule: *const c_char) -> Result<ThresholdRule, TispStatus> {
    if rule.is_null() {
        return Err(fail(TispStatus::NullPointer, "rule is null"));
    }
    let text = CStr::from_ptr(rule).to_str().map_err(|_| fail(TispStatus::InvalidArgument, "rule is not UTF-8"))?;
    text.parse::<ThresholdRule>().map_err(from_error)
}

unsafe fn slice<'a>(data: *const f64, len: usize, name: &str) -> Result<&'a [f64], TispStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(fail(TispStatus::NullPointer, &format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

/// Message for the most recent failure on this thread (empty after a success).
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn tisp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// `Θ(t; λ)` for a rule string such as `"soft"`, `"scad:3.7"` or `"hybrid:0.5"`.
///
/// # Safety
/// `rule` must be a NUL-terminated string and `out` a writable `double`.
#[no_mangle]
pub unsafe extern "C" fn tisp_threshold_apply(rule: *const c_char, t: f64, lambda: f64, out: *mut f64) -> TispStatus {
    guard(|| {
        if out.is_null() {
            return fail(TispStatus::NullPointer, "out is null");
        }
        let rule = match parse_rule(rule) {
            Ok(r) => r,
            Err(s) => return s,
        };
        if !(t.is_finite() && lambda.is_finite() && lambda >= 0.0) {
            return fail(TispStatus::InvalidArgument, "t must be finite and lambda finite and nonnegative");
        }
        *out = rule.apply(t, lambda);
        TispStatus::Ok
    })
}

/// Penalty `P(θ; λ)` induced by the rule.
///
/// # Safety
/// As for [`tisp_threshold_apply`].
#[no_mangle]
pub unsafe extern "C" fn tisp_penalty(rule: *const c_char, theta: f64, lambda: f64, out: *mut f64) -> TispStatus {
    guard(|| {
        if out.is_null() {
            return fail(TispStatus::NullPointer, "out is null");
        }
        let rule = match parse_rule(rule) {
            Ok(r) => r,
            Err(s) => return s,
        };
        if !(theta.is_finite() && lambda.is_finite() && lambda >= 0.0) {
            return fail(TispStatus::InvalidArgument, "theta must be finite and lambda finite and nonnegative");
        }
        *out = rule.penalty(theta, lambda);
        TispStatus::Ok
    })
}

/// Builds a problem from a row-major `n × p` design and a length-`n` response.
/// The data are copied.
///
/// # Safety
/// `x` must point to `n*p` doubles, `y` to `n` doubles, `rule` to a
/// NUL-terminated string and `out` to a writable handle pointer.
#[no_mangle]
pub unsafe extern "C" fn tisp_problem_new(
    x: *const f64,
    n: usize,
    p: usize,
    y: *const f64,
    rule: *const c_char,
    lambda: f64,
    scale: TispScale,
    k: f64,
    out: *mut *mut TispProblem,
) -> TispStatus {
    guard(|| {
        if out.is_null() {
            return fail(TispStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let rule = match parse_rule(rule) {
            Ok(r) => r,
            Err(s) => return s,
        };
        let Some(len) = n.checked_mul(p) else {
            return fail(TispStatus::InvalidArgument, "n*p overflows");
        };
        let (xs, ys) = match (slice(x, len, "x"), slice(y, n, "y")) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let mode = match scale {
            TispScale::Unscaled => ScaleMode::Unscaled,
            TispScale::Auto => ScaleMode::AutoK0,
            TispScale::Fixed => ScaleMode::Fixed(k),
        };
        let built = DenseMatrix::new(n, p, xs.to_vec()).and_then(|xm| {
            let yv = DenseVector::new(ys.to_vec())?;
            solver::TispProblem::new(xm, yv, rule, Lambda::Scalar(lambda), mode)
        });
        match built {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(TispProblem { inner }));
                TispStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `problem` must come from [`tisp_problem_new`] and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn tisp_problem_free(problem: *mut TispProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Runs the solver from `init` (length `p`, or null for the zero vector).
///
/// # Safety
/// `problem` must be a live handle; `init`, if non-null, must point to `p`
/// doubles; `out` must be a writable handle pointer.
#[no_mangle]
pub unsafe extern "C" fn tisp_solve(
    problem: *const TispProblem,
    init: *const f64,
    tol: f64,
    max_iter: usize,
    out: *mut *mut TispResult,
) -> TispStatus {
    guard(|| {
        if out.is_null() || problem.is_null() {
            return fail(TispStatus::NullPointer, "problem or out is null");
        }
        *out = ptr::null_mut();
        let problem = &(*problem).inner;
        let p = problem.p();
        let start = if init.is_null() {
            vec![0.0; p]
        } else {
            std::slice::from_raw_parts(init, p).to_vec()
        };
        match solver::solve(problem, &start, tol, max_iter) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(TispResult { inner }));
                TispStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `result` must come from [`tisp_solve`] and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn tisp_result_free(result: *mut TispResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Number of coefficients; 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tisp_result_len(result: *const TispResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.beta_hat.len())
}

/// Copies the coefficients into `buf`, which must hold `len ≥ tisp_result_len` doubles.
///
/// # Safety
/// `result` must be a live handle and `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tisp_result_beta(result: *const TispResult, buf: *mut f64, len: usize) -> TispStatus {
    guard(|| {
        let Some(r) = result.as_ref() else {
            return fail(TispStatus::NullPointer, "result is null");
        };
        let beta = &r.inner.beta_hat;
        if len < beta.len() {
            return fail(TispStatus::BufferTooSmall, &format!("buffer holds {len}, need {}", beta.len()));
        }
        if buf.is_null() {
            return fail(TispStatus::NullPointer, "buf is null");
        }
        ptr::copy_nonoverlapping(beta.as_ptr(), buf, beta.len());
        TispStatus::Ok
    })
}

/// Summary scalars of a fit; any output pointer may be null.
///
/// # Safety
/// `result` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn tisp_result_summary(
    result: *const TispResult,
    iterations: *mut usize,
    converged: *mut bool,
    objective: *mut f64,
    theta_residual: *mut f64,
) -> TispStatus {
    guard(|| {
        let Some(r) = result.as_ref() else {
            return fail(TispStatus::NullPointer, "result is null");
        };
        let r = &r.inner;
        if let Some(o) = iterations.as_mut() {
            *o = r.iterations;
        }
        if let Some(o) = converged.as_mut() {
            *o = r.converged;
        }
        if let Some(o) = objective.as_mut() {
            *o = r.objective;
        }
        if let Some(o) = theta_residual.as_mut() {
            *o = r.theta_residual;
        }
        TispStatus::Ok
    })
}
