// SPDX-License-Identifier: Apache-2.0

//! C ABI over `rieszqp`.
//!
//! Every entry point returns an [`RqpStatus`]; results go through out
//! pointers. Handles are opaque and must be released with the matching
//! `*_free` function. After a non-OK status, [`rqp_last_error`] gives the
//! message for the calling thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use rieszqp::fields::{FieldVector, SourceMeasure};
use rieszqp::geometry::{discretize, Discretization, GeometrySpec};
use rieszqp::kernel::{assemble_gram, DiscreteMeasure, KernelContext, PointMasses};
use rieszqp::solvers::{solve_balayage, solve_capacitary, solve_gauss, SolveOptions, SolveReport};
use rieszqp::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RqpStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Parse = 3,
    Domain = 4,
    IndexOutOfRange = 5,
    EmptyAdmissibleSet = 6,
    Io = 7,
    Panic = 8,
}

/// Nodes of a discretized set.
pub struct RqpDiscretization {
    inner: Discretization,
}

/// Gram matrix and kernel parameters over one discretization.
pub struct RqpKernel {
    inner: KernelContext,
}

/// Result of one solve.
pub struct RqpReport {
    inner: SolveReport,
    n: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> RqpStatus {
    match e {
        Error::Config { .. } => RqpStatus::Config,
        Error::Domain(_) => RqpStatus::Domain,
        Error::IndexOutOfRange { .. } => RqpStatus::IndexOutOfRange,
        Error::EmptyAdmissibleSet => RqpStatus::EmptyAdmissibleSet,
        Error::Parse(_) | Error::Json(_) => RqpStatus::Parse,
        Error::Io(_) | Error::Csv(_) => RqpStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RqpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RqpStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            RqpStatus::NullPointer
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            RqpStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn opt_slice<'a, T>(p: *const T, len: usize) -> Option<&'a [T]> {
    if p.is_null() {
        None
    } else {
        Some(slice::from_raw_parts(p, len))
    }
}

fn options(tol: f64) -> SolveOptions {
    SolveOptions { tol: if tol > 0.0 { tol } else { 1e-8 }, ..SolveOptions::default() }
}

fn mask_of(k: &KernelContext, mask: Option<&[usize]>) -> Result<Vec<usize>, Fail> {
    let n = k.len();
    match mask {
        None => Ok((0..n).collect()),
        Some(m) => {
            if let Some(&i) = m.iter().find(|&&i| i >= n) {
                return Err(Error::IndexOutOfRange { index: i, len: n }.into());
            }
            let mut v = m.to_vec();
            v.sort_unstable();
            v.dedup();
            if v.is_empty() {
                return Err(Error::config("mask", "selects no node").into());
            }
            Ok(v)
        }
    }
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rqp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Discretizes a geometry given as JSON (same schema as the `geometry`
/// table of a scenario file).
#[no_mangle]
pub unsafe extern "C" fn rqp_discretize_json(json: *const c_char, out: *mut *mut RqpDiscretization) -> RqpStatus {
    guard(|| {
        if json.is_null() {
            return Err(Fail::Null("json"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| Error::Parse(e.to_string()))?;
        let spec: GeometrySpec = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        emit(out, RqpDiscretization { inner: discretize(&spec)? })
    })
}

#[no_mangle]
pub unsafe extern "C" fn rqp_discretization_len(d: *const RqpDiscretization, out: *mut usize) -> RqpStatus {
    guard(|| {
        let d = get(d, "discretization")?;
        *out.as_mut().ok_or(Fail::Null("out"))? = d.inner.len();
        Ok(())
    })
}

/// Copies node coordinates row-major into `buf` (`len >= N * dim`).
#[no_mangle]
pub unsafe extern "C" fn rqp_discretization_points(d: *const RqpDiscretization, buf: *mut f64, len: usize) -> RqpStatus {
    guard(|| {
        let d = &get(d, "discretization")?.inner;
        if buf.is_null() {
            return Err(Fail::Null("buf"));
        }
        let need = d.len() * d.dim;
        if len < need {
            return Err(Error::config("len", format!("buffer holds {len} values, {need} needed")).into());
        }
        let out = slice::from_raw_parts_mut(buf, need);
        for (row, p) in out.chunks_mut(d.dim).zip(&d.points) {
            row.copy_from_slice(p);
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rqp_discretization_free(d: *mut RqpDiscretization) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Assembles the Gram matrix of order `alpha` over the discretization.
#[no_mangle]
pub unsafe extern "C" fn rqp_kernel_assemble(d: *const RqpDiscretization, alpha: f64, out: *mut *mut RqpKernel) -> RqpStatus {
    guard(|| {
        let d = get(d, "discretization")?;
        emit(out, RqpKernel { inner: assemble_gram(&d.inner, alpha)? })
    })
}

#[no_mangle]
pub unsafe extern "C" fn rqp_kernel_entry(k: *const RqpKernel, i: usize, j: usize, out: *mut f64) -> RqpStatus {
    guard(|| {
        let k = &get(k, "kernel")?.inner;
        let n = k.len();
        if i >= n || j >= n {
            return Err(Error::IndexOutOfRange { index: i.max(j), len: n }.into());
        }
        *out.as_mut().ok_or(Fail::Null("out"))? = k.entry(i, j);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rqp_kernel_free(k: *mut RqpKernel) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

/// Gauss problem on `mask` (all nodes when NULL) with the external field
/// `f` given per node (`f_len == N`; entries may be +inf; NULL means f = 0).
/// `tol <= 0` selects the default tolerance.
#[no_mangle]
pub unsafe extern "C" fn rqp_solve_gauss(
    k: *const RqpKernel,
    mask: *const usize,
    mask_len: usize,
    f: *const f64,
    f_len: usize,
    tol: f64,
    out: *mut *mut RqpReport,
) -> RqpStatus {
    guard(|| {
        let k = &get(k, "kernel")?.inner;
        let m = mask_of(k, opt_slice(mask, mask_len))?;
        let field = match opt_slice(f, f_len) {
            None => FieldVector::zero(k.len()),
            Some(v) if v.len() == k.len() => FieldVector { values: v.to_vec(), ..FieldVector::default() },
            Some(v) => return Err(Error::config("f_len", format!("expected {} values, got {}", k.len(), v.len())).into()),
        };
        emit(out, RqpReport { inner: solve_gauss(k, &m, &field, &options(tol))?, n: k.len() })
    })
}

#[no_mangle]
pub unsafe extern "C" fn rqp_solve_capacitary(
    k: *const RqpKernel,
    mask: *const usize,
    mask_len: usize,
    tol: f64,
    out: *mut *mut RqpReport,
) -> RqpStatus {
    guard(|| {
        let k = &get(k, "kernel")?.inner;
        let m = mask_of(k, opt_slice(mask, mask_len))?;
        emit(out, RqpReport { inner: solve_capacitary(k, &m, &options(tol))?, n: k.len() })
    })
}

/// Balayage of `delta` onto `mask`. `delta` is the sum of node masses
/// (`node_mass`, length N, may be NULL) and `n_points` free point masses
/// with row-major coordinates `points` (`n_points * dim`) and `point_mass`.
#[no_mangle]
pub unsafe extern "C" fn rqp_solve_balayage(
    k: *const RqpKernel,
    mask: *const usize,
    mask_len: usize,
    node_mass: *const f64,
    points: *const f64,
    point_mass: *const f64,
    n_points: usize,
    tol: f64,
    out: *mut *mut RqpReport,
) -> RqpStatus {
    guard(|| {
        let k = &get(k, "kernel")?.inner;
        let m = mask_of(k, opt_slice(mask, mask_len))?;
        let on_grid = match opt_slice(node_mass, k.len()) {
            None => DiscreteMeasure::zero(),
            Some(v) => {
                if v.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
                    return Err(Error::config("node_mass", "masses must be finite and nonnegative").into());
                }
                DiscreteMeasure::from_dense(v)
            }
        };
        let off_grid = if n_points == 0 {
            PointMasses::default()
        } else {
            let coords = opt_slice(points, n_points * k.dim).ok_or(Fail::Null("points"))?;
            let w = opt_slice(point_mass, n_points).ok_or(Fail::Null("point_mass"))?;
            let pm = PointMasses::new(coords.chunks(k.dim).map(<[f64]>::to_vec).collect(), w.to_vec());
            pm.validate(k.dim)?;
            pm
        };
        let delta = SourceMeasure { on_grid, off_grid };
        emit(out, RqpReport { inner: solve_balayage(k, &delta, &m, &options(tol))?, n: k.len() })
    })
}

/// Dense minimizer weights (`len >= N`).
#[no_mangle]
pub unsafe extern "C" fn rqp_report_weights(r: *const RqpReport, buf: *mut f64, len: usize) -> RqpStatus {
    guard(|| {
        let r = get(r, "report")?;
        if buf.is_null() {
            return Err(Fail::Null("buf"));
        }
        if len < r.n {
            return Err(Error::config("len", format!("buffer holds {len} values, {} needed", r.n)).into());
        }
        slice::from_raw_parts_mut(buf, r.n).copy_from_slice(&r.inner.minimizer.to_dense(r.n));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rqp_report_len(r: *const RqpReport, out: *mut usize) -> RqpStatus {
    guard(|| {
        let r = get(r, "report")?;
        *out.as_mut().ok_or(Fail::Null("out"))? = r.n;
        Ok(())
    })
}

/// Optimal objective: `w_f(A)`, the capacitary energy, or the balayage
/// objective depending on the solve.
#[no_mangle]
pub unsafe extern "C" fn rqp_report_objective(r: *const RqpReport, out: *mut f64) -> RqpStatus {
    guard(|| {
        let r = get(r, "report")?;
        *out.as_mut().ok_or(Fail::Null("out"))? = r.inner.objective;
        Ok(())
    })
}

/// Total mass of the minimizer.
#[no_mangle]
pub unsafe extern "C" fn rqp_report_mass(r: *const RqpReport, out: *mut f64) -> RqpStatus {
    guard(|| {
        let r = get(r, "report")?;
        *out.as_mut().ok_or(Fail::Null("out"))? = r.inner.minimizer.total_mass();
        Ok(())
    })
}

/// Robin constant (NaN when the solve does not define one).
#[no_mangle]
pub unsafe extern "C" fn rqp_report_robin_constant(r: *const RqpReport, out: *mut f64) -> RqpStatus {
    guard(|| {
        let r = get(r, "report")?;
        *out.as_mut().ok_or(Fail::Null("out"))? = r.inner.robin_constant.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// 1 if the KKT residuals met the tolerance, else 0.
#[no_mangle]
pub unsafe extern "C" fn rqp_report_converged(r: *const RqpReport, out: *mut c_int) -> RqpStatus {
    guard(|| {
        let r = get(r, "report")?;
        *out.as_mut().ok_or(Fail::Null("out"))? = c_int::from(r.inner.converged);
        Ok(())
    })
}

/// Report as a JSON string; release it with [`rqp_string_free`].
#[no_mangle]
pub unsafe extern "C" fn rqp_report_json(r: *const RqpReport, out: *mut *mut c_char) -> RqpStatus {
    guard(|| {
        let r = get(r, "report")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let s = serde_json::to_string(&r.inner.to_json(false)?).map_err(Error::from)?;
        *out = CString::new(s).map_err(|e| Error::Parse(e.to_string()))?.into_raw();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rqp_report_free(r: *mut RqpReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

#[no_mangle]
pub unsafe extern "C" fn rqp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
