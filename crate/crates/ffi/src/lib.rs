// SPDX-License-Identifier: Apache-2.0

//! C interface to `smoothlin`.
//!
//! Handles are opaque and owned by the caller until passed to the matching
//! `*_free`. Every fallible call returns an [`SlStatus`]; on failure
//! [`sl_last_error`] describes the problem until the next call on the same
//! thread. Matrices are written row-major into caller buffers whose length
//! must equal `rows * cols`. A vector of length zero may be passed as NULL.
//!
//! Pointer arguments must be NULL or valid for the stated length; handles
//! must come from this library and not be used after being freed.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use smoothlin::conjugacy::{ConjugacyEngine, EngineConfig};
use smoothlin::derivatives::h_jacobians;
use smoothlin::evolution::{evolve_coupled, evolve_driver};
use smoothlin::examples::{build, ExampleParams, Variant};
use smoothlin::report::{run, Phases, RunConfig};
use smoothlin::{Error, Mat, SystemSpec, Vector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    SingularOperator = 4,
    ContractionViolation = 5,
    NoConvergence = 6,
    WindowExhausted = 7,
    Numerical = 8,
    Panic = 9,
}

/// A coupled system.
pub struct SlSystem {
    sys: SystemSpec,
}

/// A conjugacy engine with its own row cache. Safe to share between threads.
pub struct SlEngine {
    engine: ConjugacyEngine,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(SlStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::SingularOperator { .. } => SlStatus::SingularOperator,
            Error::ContractionViolation { .. } => SlStatus::ContractionViolation,
            Error::NoConvergence { .. } => SlStatus::NoConvergence,
            Error::WindowExhausted { .. } => SlStatus::WindowExhausted,
            Error::DimensionMismatch { .. } => SlStatus::DimensionMismatch,
            Error::InvalidConfig(_) => SlStatus::InvalidArgument,
            Error::Numerical(_) => SlStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SlStatus::InvalidArgument, msg.into())
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SlStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SlStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            SlStatus::Panic
        }
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(SlStatus::NullPointer, format!("{what} is NULL")))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(SlStatus::NullPointer, format!("{what} is NULL")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn vector(p: *const f64, len: usize, expected: usize, what: &str) -> Result<Vector, Failure> {
    if len != expected {
        return Err(Failure(SlStatus::DimensionMismatch, format!("{what}: expected length {expected}, got {len}")));
    }
    if len == 0 {
        return Ok(Vector::zeros(0));
    }
    if p.is_null() {
        return Err(Failure(SlStatus::NullPointer, format!("{what} is NULL")));
    }
    Ok(Vector::from_column_slice(std::slice::from_raw_parts(p, len)))
}

unsafe fn write(out: *mut f64, len: usize, values: impl ExactSizeIterator<Item = f64>, what: &str) -> Result<(), Failure> {
    if len != values.len() {
        return Err(Failure(SlStatus::DimensionMismatch, format!("{what}: buffer length {len}, need {}", values.len())));
    }
    if len == 0 {
        return Ok(());
    }
    if out.is_null() {
        return Err(Failure(SlStatus::NullPointer, format!("{what} is NULL")));
    }
    let dst = std::slice::from_raw_parts_mut(out, len);
    for (d, v) in dst.iter_mut().zip(values) {
        *d = v;
    }
    Ok(())
}

unsafe fn write_mat(out: *mut f64, len: usize, m: &Mat, what: &str) -> Result<(), Failure> {
    let (r, c) = m.shape();
    write(out, len, (0..r * c).map(|i| m[(i / c, i % c)]), what)
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(SlStatus::NullPointer, "output handle pointer is NULL".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn sl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Built-in system with default parameters: "remm", "ex1", "ex2",
/// "end_cfg" or "emo".
#[no_mangle]
pub unsafe extern "C" fn sl_system_builtin(name: *const c_char, out: *mut *mut SlSystem) -> SlStatus {
    guard(|| {
        let v: Variant = text(name, "name")?.parse()?;
        let sys = build(&ExampleParams::new(v))?;
        put(out, SlSystem { sys })
    })
}

/// Built-in system from a JSON parameter object such as
/// `{"variant": "ex1", "lambda": 0.5}`.
#[no_mangle]
pub unsafe extern "C" fn sl_system_from_json(json: *const c_char, out: *mut *mut SlSystem) -> SlStatus {
    guard(|| {
        let p: ExampleParams = serde_json::from_str(text(json, "json")?).map_err(|e| invalid(e.to_string()))?;
        let sys = build(&p)?;
        put(out, SlSystem { sys })
    })
}

#[no_mangle]
pub unsafe extern "C" fn sl_system_free(sys: *mut SlSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

#[no_mangle]
pub unsafe extern "C" fn sl_system_dims(sys: *const SlSystem, dim_x: *mut usize, dim_y: *mut usize) -> SlStatus {
    guard(|| {
        let s = &handle(sys, "system")?.sys;
        if dim_x.is_null() || dim_y.is_null() {
            return Err(Failure(SlStatus::NullPointer, "dimension output is NULL".into()));
        }
        *dim_x = s.dim_x();
        *dim_y = s.dim_y();
        Ok(())
    })
}

/// Transition operator from time `n` to time `m`, dim_x × dim_x.
#[no_mangle]
pub unsafe extern "C" fn sl_transition(sys: *const SlSystem, m: i64, n: i64, out: *mut f64, len: usize) -> SlStatus {
    guard(|| {
        let s = &handle(sys, "system")?.sys;
        write_mat(out, len, &s.transition(m, n)?, "out")
    })
}

/// Green kernel at `(m, n)`, dim_x × dim_x.
#[no_mangle]
pub unsafe extern "C" fn sl_green(sys: *const SlSystem, m: i64, n: i64, out: *mut f64, len: usize) -> SlStatus {
    guard(|| {
        let s = &handle(sys, "system")?.sys;
        write_mat(out, len, &s.green(m, n)?, "out")
    })
}

/// Coupled solution at time `k` through `(ξ, η)` at time `n`, in either
/// direction. `out_y` may be NULL when dim_y is zero.
#[no_mangle]
pub unsafe extern "C" fn sl_evolve(
    sys: *const SlSystem,
    k: i64,
    n: i64,
    xi: *const f64,
    xi_len: usize,
    eta: *const f64,
    eta_len: usize,
    out_x: *mut f64,
    out_x_len: usize,
    out_y: *mut f64,
    out_y_len: usize,
) -> SlStatus {
    guard(|| {
        let s = &handle(sys, "system")?.sys;
        let xi = vector(xi, xi_len, s.dim_x(), "xi")?;
        let eta = vector(eta, eta_len, s.dim_y(), "eta")?;
        let x = evolve_coupled(s, k, n, &xi, &eta, &EngineConfig::default().solve)?;
        let y = evolve_driver(s, k, n, &eta);
        write(out_x, out_x_len, x.iter().copied(), "out_x")?;
        write(out_y, out_y_len, y.iter().copied(), "out_y")
    })
}

/// Engine over a copy of `sys`. `config_json` may be NULL for defaults.
#[no_mangle]
pub unsafe extern "C" fn sl_engine_new(sys: *const SlSystem, config_json: *const c_char, out: *mut *mut SlEngine) -> SlStatus {
    guard(|| {
        let s = &handle(sys, "system")?.sys;
        let cfg: EngineConfig = if config_json.is_null() {
            EngineConfig::default()
        } else {
            serde_json::from_str(text(config_json, "config_json")?).map_err(|e| invalid(e.to_string()))?
        };
        let engine = ConjugacyEngine::new(s.clone(), cfg)?;
        put(out, SlEngine { engine })
    })
}

#[no_mangle]
pub unsafe extern "C" fn sl_engine_free(engine: *mut SlEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// `K_n + J_n + |G(n,n+1)| γ_n`; infinite when it cannot be certified.
#[no_mangle]
pub unsafe extern "C" fn sl_contraction_estimate(engine: *const SlEngine, n: i64, out: *mut f64) -> SlStatus {
    guard(|| {
        let e = &handle(engine, "engine")?.engine;
        let v = e.contraction_estimate(n)?;
        write(out, 1, std::iter::once(v), "out")
    })
}

#[allow(clippy::too_many_arguments)]
unsafe fn conjugacy_call(
    engine: *const SlEngine,
    xi: *const f64,
    xi_len: usize,
    eta: *const f64,
    eta_len: usize,
    out: *mut f64,
    out_len: usize,
    f: impl FnOnce(&ConjugacyEngine, &Vector, &Vector) -> smoothlin::Result<Vector>,
) -> SlStatus {
    guard(|| {
        let e = &handle(engine, "engine")?.engine;
        let s = e.sys();
        let xi = vector(xi, xi_len, s.dim_x(), "xi")?;
        let eta = vector(eta, eta_len, s.dim_y(), "eta")?;
        let v = f(e, &xi, &eta)?;
        write(out, out_len, v.iter().copied(), "out")
    })
}

/// `h̄_n(ξ, η)`, length dim_x.
#[no_mangle]
pub unsafe extern "C" fn sl_bar_h(
    engine: *const SlEngine,
    n: i64,
    xi: *const f64,
    xi_len: usize,
    eta: *const f64,
    eta_len: usize,
    out: *mut f64,
    out_len: usize,
) -> SlStatus {
    conjugacy_call(engine, xi, xi_len, eta, eta_len, out, out_len, |e, x, y| e.bar_h(n, x, y))
}

/// `h_n(ξ, η)`, length dim_x.
#[no_mangle]
pub unsafe extern "C" fn sl_h(
    engine: *const SlEngine,
    n: i64,
    xi: *const f64,
    xi_len: usize,
    eta: *const f64,
    eta_len: usize,
    out: *mut f64,
    out_len: usize,
) -> SlStatus {
    conjugacy_call(engine, xi, xi_len, eta, eta_len, out, out_len, |e, x, y| e.h(n, x, y))
}

/// `∂h_n/∂ξ` (dim_x × dim_x) and `∂h_n/∂η` (dim_x × dim_y). `r_tilde` may
/// be NULL when dim_y is zero.
#[no_mangle]
pub unsafe extern "C" fn sl_h_jacobians(
    engine: *const SlEngine,
    n: i64,
    xi: *const f64,
    xi_len: usize,
    eta: *const f64,
    eta_len: usize,
    r: *mut f64,
    r_len: usize,
    r_tilde: *mut f64,
    r_tilde_len: usize,
) -> SlStatus {
    guard(|| {
        let e = &handle(engine, "engine")?.engine;
        let s = e.sys();
        let xi = vector(xi, xi_len, s.dim_x(), "xi")?;
        let eta = vector(eta, eta_len, s.dim_y(), "eta")?;
        let j = h_jacobians(e, n, &xi, &eta)?;
        write_mat(r, r_len, &j.r, "r")?;
        write_mat(r_tilde, r_tilde_len, &j.r_tilde, "r_tilde")
    })
}

/// Runs the checker as the command line does. `config_json` is a run
/// configuration (NULL for defaults); `phases` is "check", "conjugate",
/// "derivatives" or "report". The report is returned as JSON in `out_json`,
/// to be released with [`sl_string_free`], and `out_pass` receives 1 when
/// the verdict passes. A failing verdict still returns `SL_STATUS_OK`.
#[no_mangle]
pub unsafe extern "C" fn sl_run(
    config_json: *const c_char,
    phases: *const c_char,
    out_json: *mut *mut c_char,
    out_pass: *mut i32,
) -> SlStatus {
    guard(|| {
        let cfg: RunConfig = if config_json.is_null() {
            RunConfig::default()
        } else {
            serde_json::from_str(text(config_json, "config_json")?).map_err(|e| invalid(e.to_string()))?
        };
        let phases = match text(phases, "phases")? {
            "check" => Phases::Check,
            "conjugate" => Phases::Conjugate,
            "derivatives" => Phases::Derivatives,
            "report" | "all" => Phases::All,
            other => return Err(invalid(format!("unknown phases {other:?}"))),
        };
        if out_json.is_null() {
            return Err(Failure(SlStatus::NullPointer, "out_json is NULL".into()));
        }
        let rep = run(&cfg, phases)?;
        let json = CString::new(rep.to_json()?).map_err(|e| invalid(e.to_string()))?;
        if !out_pass.is_null() {
            *out_pass = rep.verdict.pass as i32;
        }
        *out_json = json.into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn sl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn sl_version() -> *const c_char {
    static V: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    V.as_ptr()
}

// Engines are shared across threads by C callers.
const _: () = {
    fn check<T: Send + Sync>() {}
    #[allow(dead_code)]
    fn handles() {
        check::<SlEngine>();
        check::<SlSystem>();
    }
};
