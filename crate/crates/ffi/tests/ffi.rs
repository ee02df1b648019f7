// SPDX-License-Identifier: Apache-2.0

use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use rieszqp_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(rqp_last_error()).to_string_lossy().into_owned() }
}

fn sphere(nodes: usize) -> *mut RqpDiscretization {
    let json = CString::new(format!(r#"{{"dim":3,"nodes":{nodes},"shape":{{"kind":"sphere","radius":1.0}}}}"#)).unwrap();
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { rqp_discretize_json(json.as_ptr(), &mut d) }, RqpStatus::Ok);
    d
}

fn kernel(d: *const RqpDiscretization, alpha: f64) -> *mut RqpKernel {
    let mut k = ptr::null_mut();
    assert_eq!(unsafe { rqp_kernel_assemble(d, alpha, &mut k) }, RqpStatus::Ok, "{}", last_error());
    k
}

#[test]
fn two_node_gauss_splits_evenly() {
    unsafe {
        let d = sphere(2);
        let k = kernel(d, 2.0);
        let mut r = ptr::null_mut();
        assert_eq!(rqp_solve_gauss(k, ptr::null(), 0, ptr::null(), 0, 0.0, &mut r), RqpStatus::Ok);
        let mut w = [0.0; 2];
        assert_eq!(rqp_report_weights(r, w.as_mut_ptr(), 2), RqpStatus::Ok);
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);
        let mut conv = 0;
        assert_eq!(rqp_report_converged(r, &mut conv), RqpStatus::Ok);
        assert_eq!(conv, 1);
        // antipodal unit-sphere nodes: K12 = 1/2, K11 = (3/2) h^-1 with h = 1
        let (mut k01, mut k00, mut obj) = (0.0, 0.0, 0.0);
        rqp_kernel_entry(k, 0, 1, &mut k01);
        rqp_kernel_entry(k, 0, 0, &mut k00);
        rqp_report_objective(r, &mut obj);
        assert!((k01 - 0.5).abs() < 1e-15);
        assert!((obj - 0.25 * (2.0 * k00 + 2.0 * k01)).abs() < 1e-12);
        rqp_report_free(r);
        rqp_kernel_free(k);
        rqp_discretization_free(d);
    }
}

#[test]
fn capacity_and_balayage_on_sphere() {
    unsafe {
        let d = sphere(600);
        let k = kernel(d, 2.0);
        let mut cap = ptr::null_mut();
        assert_eq!(rqp_solve_capacitary(k, ptr::null(), 0, 1e-8, &mut cap), RqpStatus::Ok);
        let mut c = 0.0;
        rqp_report_mass(cap, &mut c);
        assert!((c - 1.0).abs() < 0.03, "capacity {c}");

        let pts = [2.0, 0.0, 0.0];
        let m = [1.0];
        let mut bal = ptr::null_mut();
        let st = rqp_solve_balayage(k, ptr::null(), 0, ptr::null(), pts.as_ptr(), m.as_ptr(), 1, 1e-8, &mut bal);
        assert_eq!(st, RqpStatus::Ok, "{}", last_error());
        let mut mass = 0.0;
        rqp_report_mass(bal, &mut mass);
        assert!((mass - 0.5).abs() < 0.02, "mass {mass}");

        let mut json = ptr::null_mut();
        assert_eq!(rqp_report_json(bal, &mut json), RqpStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        rqp_string_free(json);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v.get("kkt").is_some());

        rqp_report_free(cap);
        rqp_report_free(bal);
        rqp_kernel_free(k);
        rqp_discretization_free(d);
    }
}

#[test]
fn errors_map_to_codes() {
    unsafe {
        let bad = CString::new("{not json").unwrap();
        let mut d = ptr::null_mut();
        assert_eq!(rqp_discretize_json(bad.as_ptr(), &mut d), RqpStatus::Parse);
        assert!(!last_error().is_empty());

        assert_eq!(rqp_discretize_json(ptr::null(), &mut d), RqpStatus::NullPointer);

        let d = sphere(4);
        let mut k = ptr::null_mut();
        assert_eq!(rqp_kernel_assemble(d, 3.5, &mut k), RqpStatus::Config);
        assert!(last_error().contains("alpha"), "{}", last_error());

        let k = kernel(d, 2.0);
        let mut v = 0.0;
        assert_eq!(rqp_kernel_entry(k, 0, 9, &mut v), RqpStatus::IndexOutOfRange);

        // every node removed by f = +inf
        let f = [f64::INFINITY; 4];
        let mut r = ptr::null_mut();
        assert_eq!(rqp_solve_gauss(k, ptr::null(), 0, f.as_ptr(), 4, 0.0, &mut r), RqpStatus::EmptyAdmissibleSet);
        assert!(r.is_null());

        let mask = [7usize];
        assert_eq!(rqp_solve_capacitary(k, mask.as_ptr(), 1, 0.0, &mut r), RqpStatus::IndexOutOfRange);

        let mut buf = [0.0; 2];
        let mut g = ptr::null_mut();
        assert_eq!(rqp_solve_gauss(k, ptr::null(), 0, ptr::null(), 0, 0.0, &mut g), RqpStatus::Ok);
        assert_eq!(rqp_report_weights(g, buf.as_mut_ptr(), 2), RqpStatus::Config);

        rqp_report_free(g);
        rqp_kernel_free(k);
        rqp_discretization_free(d);
        // freeing null is a no-op
        rqp_report_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_the_api() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let h = std::fs::read_to_string(dir.join("include/rieszqp.h")).unwrap();
    for name in [
        "rqp_discretize_json",
        "rqp_kernel_assemble",
        "rqp_solve_gauss",
        "rqp_solve_capacitary",
        "rqp_solve_balayage",
        "rqp_report_weights",
        "rqp_report_free",
        "rqp_last_error",
        "typedef struct RqpKernel RqpKernel",
    ] {
        assert!(h.contains(name), "{name} missing from header");
    }
}

/// Compiles a small C program against the header and the static library.
/// Skipped when no C compiler or static archive is around.
#[test]
fn c_program_links_and_runs() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap().to_path_buf();
    let lib = profile_dir.join("librieszqp_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static library at {} or no cc", lib.display());
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let bin = tmp.path().join("smoke");
    let st = Command::new("cc")
        .arg(dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(st.success(), "cc failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "smoke exited with {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("0.5"));
}
