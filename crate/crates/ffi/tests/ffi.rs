// SPDX-License-Identifier: Apache-2.0

use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use smoothlin_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(sl_last_error()).to_string_lossy().into_owned() }
}

fn system(name: &str) -> *mut SlSystem {
    let name = CString::new(name).unwrap();
    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { sl_system_builtin(name.as_ptr(), &mut sys) }, SlStatus::Ok, "{}", last_error());
    sys
}

fn engine(sys: *const SlSystem) -> *mut SlEngine {
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { sl_engine_new(sys, ptr::null(), &mut e) }, SlStatus::Ok, "{}", last_error());
    e
}

#[test]
fn dims_and_kernels() {
    let sys = system("ex1");
    let (mut dx, mut dy) = (0usize, 0usize);
    unsafe {
        assert_eq!(sl_system_dims(sys, &mut dx, &mut dy), SlStatus::Ok);
        assert_eq!((dx, dy), (2, 0));
        let mut t = [0.0; 4];
        assert_eq!(sl_transition(sys, 4, 1, t.as_mut_ptr(), 4), SlStatus::Ok);
        assert!((t[0] - 8.0).abs() < 1e-12 && (t[3] - 0.125).abs() < 1e-12);
        assert_eq!(t[1], 0.0);
        let mut g = [0.0; 4];
        assert_eq!(sl_green(sys, 4, 1, g.as_mut_ptr(), 4), SlStatus::Ok);
        assert_eq!(g[0], 0.0);
        assert!((g[3] - 0.125).abs() < 1e-12);
        assert_eq!(sl_green(sys, 4, 1, g.as_mut_ptr(), 3), SlStatus::DimensionMismatch);
        assert!(last_error().contains("buffer length 3"));
        sl_system_free(sys);
    }
}

#[test]
fn evolve_round_trip() {
    let sys = system("end_cfg");
    let xi = [0.3, -0.2];
    let eta = [0.5, 0.1];
    let (mut x, mut y) = ([0.0; 2], [0.0; 2]);
    let (mut bx, mut by) = ([0.0; 2], [0.0; 2]);
    unsafe {
        assert_eq!(sl_evolve(sys, 5, 0, xi.as_ptr(), 2, eta.as_ptr(), 2, x.as_mut_ptr(), 2, y.as_mut_ptr(), 2), SlStatus::Ok);
        assert_eq!(sl_evolve(sys, 0, 5, x.as_ptr(), 2, y.as_ptr(), 2, bx.as_mut_ptr(), 2, by.as_mut_ptr(), 2), SlStatus::Ok);
        sl_system_free(sys);
    }
    for i in 0..2 {
        assert!((bx[i] - xi[i]).abs() < 1e-10);
        assert!((by[i] - eta[i]).abs() < 1e-12);
    }
}

#[test]
fn conjugacy_calls() {
    let sys = system("end_cfg");
    let e = engine(sys);
    let xi = [0.4, 0.1];
    let eta = [-0.2, 0.3];
    let (mut h, mut bar) = ([0.0; 2], [0.0; 2]);
    let (mut r, mut rt) = ([0.0; 4], [0.0; 4]);
    let mut kappa = 0.0;
    unsafe {
        assert_eq!(sl_h(e, 0, xi.as_ptr(), 2, eta.as_ptr(), 2, h.as_mut_ptr(), 2), SlStatus::Ok);
        let shifted = [xi[0] + h[0], xi[1] + h[1]];
        assert_eq!(sl_bar_h(e, 0, shifted.as_ptr(), 2, eta.as_ptr(), 2, bar.as_mut_ptr(), 2), SlStatus::Ok);
        assert_eq!(sl_h_jacobians(e, 0, xi.as_ptr(), 2, eta.as_ptr(), 2, r.as_mut_ptr(), 4, rt.as_mut_ptr(), 4), SlStatus::Ok);
        assert_eq!(sl_contraction_estimate(e, 0, &mut kappa), SlStatus::Ok);
        sl_engine_free(e);
        sl_system_free(sys);
    }
    // h_n(ξ) = −h̄_n(ξ + h_n(ξ)).
    assert!((h[0] + bar[0]).abs() < 1e-9 && (h[1] + bar[1]).abs() < 1e-9);
    assert!(kappa > 0.0 && kappa < 1.0);
    assert!(r.iter().chain(&rt).all(|v| v.is_finite()));
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut sys = ptr::null_mut();
        let bad = CString::new("nope").unwrap();
        assert_eq!(sl_system_builtin(bad.as_ptr(), &mut sys), SlStatus::InvalidArgument);
        assert!(sys.is_null());
        assert!(!last_error().is_empty());

        let json = CString::new(r#"{"variant": "ex1", "lambda": -1}"#).unwrap();
        assert_eq!(sl_system_from_json(json.as_ptr(), &mut sys), SlStatus::InvalidArgument);
        assert_eq!(sl_system_builtin(ptr::null(), &mut sys), SlStatus::NullPointer);

        let emo = system("emo");
        let e = engine(emo);
        let mut h = [0.0; 2];
        let xi = [0.1, 0.1];
        assert_eq!(sl_h(e, 0, xi.as_ptr(), 2, ptr::null(), 0, h.as_mut_ptr(), 2), SlStatus::ContractionViolation);
        assert!(last_error().contains("contraction"), "{}", last_error());
        assert_eq!(sl_h(e, 0, xi.as_ptr(), 1, ptr::null(), 0, h.as_mut_ptr(), 2), SlStatus::DimensionMismatch);
        assert_eq!(sl_bar_h(ptr::null(), 0, xi.as_ptr(), 2, ptr::null(), 0, h.as_mut_ptr(), 2), SlStatus::NullPointer);
        sl_engine_free(e);
        sl_system_free(emo);
        sl_engine_free(ptr::null_mut());
        sl_system_free(ptr::null_mut());

        // A success clears the message.
        let ex1 = system("ex1");
        assert_eq!(last_error(), "");
        sl_system_free(ex1);
    }
}

#[test]
fn run_returns_json() {
    let cfg = CString::new(r#"{"system": {"variant": "ex1"}, "probe_grid": {"count": 2}}"#).unwrap();
    let phases = CString::new("conjugate").unwrap();
    let mut out = ptr::null_mut();
    let mut pass = -1;
    unsafe {
        assert_eq!(sl_run(cfg.as_ptr(), phases.as_ptr(), &mut out, &mut pass), SlStatus::Ok, "{}", last_error());
        let text = CStr::from_ptr(out).to_str().unwrap().to_owned();
        sl_string_free(out);
        assert_eq!(pass, 1);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["verdict"]["pass"], true);

        let bad = CString::new("everything").unwrap();
        assert_eq!(sl_run(cfg.as_ptr(), bad.as_ptr(), &mut out, &mut pass), SlStatus::InvalidArgument);
        assert!(!CStr::from_ptr(sl_version()).to_bytes().is_empty());
    }
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/smoothlin.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in ["sl_system_builtin", "sl_engine_new", "sl_h_jacobians", "sl_run", "sl_last_error", "SL_STATUS_PANIC"] {
        assert!(text.contains(name), "{name}");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"smoothlin.h\"\nint main(void) { SlSystem *s = 0; return sl_system_builtin(\"ex1\", &s) == SL_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    match Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", include]).arg(&src).output() {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(e) => eprintln!("skipping C compile check: {e}"),
    }
}
