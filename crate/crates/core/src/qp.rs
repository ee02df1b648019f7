// SPDX-License-Identifier: Apache-2.0

//! Dense convex QP backend.
//!
//! Every problem has the form `min x^T K x + 2 g^T x` with `K` symmetric
//! positive definite, over one of three feasible sets:
//!
//! * the probability simplex (Gauss problem),
//! * the nonnegative orthant (projections, capacitary problem),
//! * `{x >= 0, K x >= o}` with `g = 0` (minimum energy in an obstacle class).
//!
//! The first two are driven by spectral projected gradient with an exact
//! line search; the obstacle class is driven by projected SOR on its dual.
//! All three finish with the same primal active-set polish, which solves the
//! reduced KKT system on the detected support and certifies the residuals.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Supports up to this size are factored directly; larger ones use PCG.
const DIRECT_SOLVE_LIMIT: usize = 1200;

#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintSet {
    Simplex,
    Nonneg,
    /// `x >= 0` and `(K x)_i >= obstacle_i` for every row.
    NonnegObstacle { obstacle: Vec<f64> },
}

#[derive(Clone, Copy, Debug)]
pub struct QpOptions {
    /// KKT tolerance relative to the largest diagonal entry of `K`.
    pub tol: f64,
    pub max_iter: usize,
    /// Record objective/residual every this many iterations (0 = off).
    pub log_every: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions { tol: 1e-8, max_iter: 20_000, log_every: 0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `max_i x_i |s_i|` with `s` the multiplier of `x >= 0`.
    pub complementarity: f64,
    /// Primal infeasibility (negativity, simplex sum, obstacle violation).
    pub feasibility: f64,
    /// `max |grad_i - c|` over the support.
    pub stationarity: f64,
    /// `max (c - grad_i)^+` over all rows.
    pub dual_feasibility: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.complementarity.max(self.feasibility).max(self.stationarity).max(self.dual_feasibility)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iteration: usize,
    pub objective: f64,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct QpResult {
    pub x: Vec<f64>,
    /// Multiplier of the equality `sum x = 1` (0 for the other sets); for
    /// the Gauss problem this is the equilibrium constant.
    pub multiplier: f64,
    pub objective: f64,
    pub kkt: KktResiduals,
    pub iterations: usize,
    pub converged: bool,
    /// Absolute tolerance the residuals were held to.
    pub tol_abs: f64,
    pub log: Vec<IterRecord>,
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

fn project(set: &ConstraintSet, v: &[f64]) -> Vec<f64> {
    match set {
        ConstraintSet::Simplex => project_simplex(v),
        _ => v.iter().map(|&x| x.max(0.0)).collect(),
    }
}

fn matvec(k: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let m = x.len();
    let data = k.as_slice();
    (0..m).into_par_iter().map(|i| data[i * m..(i + 1) * m].iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn objective(x: &[f64], kx: &[f64], g: &[f64]) -> f64 {
    dot(x, kx) + 2.0 * dot(g, x)
}

fn check_problem(k: &DMatrix<f64>, g: &[f64], set: &ConstraintSet) -> Result<()> {
    let m = g.len();
    if k.nrows() != m || k.ncols() != m {
        return Err(Error::config("qp", format!("K is {}x{} but g has length {m}", k.nrows(), k.ncols())));
    }
    if m == 0 {
        return Err(Error::config("qp", "empty problem"));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("qp", "linear term must be finite"));
    }
    if let ConstraintSet::NonnegObstacle { obstacle } = set {
        if obstacle.len() != m {
            return Err(Error::config("obstacle", "length differs from the problem size"));
        }
        if obstacle.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("obstacle", "obstacle must be finite (+inf makes the class empty)"));
        }
        if g.iter().any(|&v| v != 0.0) {
            return Err(Error::config("qp", "obstacle problems carry no linear term"));
        }
    }
    Ok(())
}

/// KKT residuals of `x` for the given set, along with the multiplier `c`.
pub fn kkt_residuals(k: &DMatrix<f64>, g: &[f64], set: &ConstraintSet, x: &[f64]) -> (KktResiduals, f64) {
    let kx = matvec(k, x);
    residuals_from(set, x, &kx, g)
}

fn residuals_from(set: &ConstraintSet, x: &[f64], kx: &[f64], g: &[f64]) -> (KktResiduals, f64) {
    let m = x.len();
    let neg = x.iter().fold(0.0f64, |a, &v| a.max(-v)) + 0.0;
    let mass: f64 = x.iter().map(|v| v.max(0.0)).sum();
    let thr = 1e-8 * mass / m as f64;
    match set {
        ConstraintSet::Simplex | ConstraintSet::Nonneg => {
            let grad: Vec<f64> = kx.iter().zip(g).map(|(a, b)| a + b).collect();
            let c = if matches!(set, ConstraintSet::Simplex) { dot(x, &grad) / x.iter().sum::<f64>() } else { 0.0 };
            let mut r = KktResiduals { feasibility: neg, ..KktResiduals::default() };
            if matches!(set, ConstraintSet::Simplex) {
                r.feasibility = r.feasibility.max((x.iter().sum::<f64>() - 1.0).abs());
            }
            for i in 0..m {
                let s = grad[i] - c;
                r.dual_feasibility = r.dual_feasibility.max(-s);
                r.complementarity = r.complementarity.max(x[i].max(0.0) * s.abs());
                if x[i] > thr {
                    r.stationarity = r.stationarity.max(s.abs());
                }
            }
            (r, c)
        }
        ConstraintSet::NonnegObstacle { obstacle } => {
            let mut r = KktResiduals { feasibility: neg, ..KktResiduals::default() };
            for i in 0..m {
                let s = kx[i] - obstacle[i];
                r.feasibility = r.feasibility.max(-s);
                r.complementarity = r.complementarity.max(x[i].max(0.0) * s.abs());
                if x[i] > thr {
                    r.stationarity = r.stationarity.max(s.abs());
                }
            }
            (r, 0.0)
        }
    }
}

/// Solves the QP; see the module docs for the three feasible sets.
pub fn solve_qp(k: &DMatrix<f64>, g: &[f64], set: &ConstraintSet, x0: Option<&[f64]>, opts: &QpOptions) -> Result<QpResult> {
    check_problem(k, g, set)?;
    let m = g.len();
    let scale = (0..m).map(|i| k[(i, i)]).fold(0.0, f64::max);
    let tol_abs = opts.tol * scale.max(f64::MIN_POSITIVE);
    let mut log = Vec::new();

    let (x, iterations) = match set {
        ConstraintSet::NonnegObstacle { obstacle } => dual_sor(k, obstacle, x0, tol_abs, opts, &mut log),
        _ => spectral_projected_gradient(k, g, set, x0, tol_abs, opts, &mut log),
    };
    let (x, polish_steps) = polish(k, g, set, x, tol_abs);
    let kx = matvec(k, &x);
    let (kkt, multiplier) = residuals_from(set, &x, &kx, g);
    let objective = objective(&x, &kx, g);
    let converged = kkt.max() <= tol_abs;
    Ok(QpResult { x, multiplier, objective, kkt, iterations: iterations + polish_steps, converged, tol_abs, log })
}

fn spectral_projected_gradient(
    k: &DMatrix<f64>,
    g: &[f64],
    set: &ConstraintSet,
    x0: Option<&[f64]>,
    tol_abs: f64,
    opts: &QpOptions,
    log: &mut Vec<IterRecord>,
) -> (Vec<f64>, usize) {
    let m = g.len();
    let start = match (x0, set) {
        (Some(x), _) => x.to_vec(),
        (None, ConstraintSet::Simplex) => vec![1.0 / m as f64; m],
        (None, _) => {
            // scaled diagonal guess: x_i = max(0, -g_i) / K_ii
            (0..m).map(|i| (-g[i]).max(0.0) / k[(i, i)]).collect()
        }
    };
    let mut x = project(set, &start);
    let mut kx = matvec(k, &x);
    let diag_max = (0..m).map(|i| k[(i, i)]).fold(0.0, f64::max);
    let mut step = 1.0 / diag_max;
    // the polish step finishes the job; the gradient phase only needs the support
    let coarse = (1e3 * tol_abs).max(1e-10 * diag_max);
    let mut it = 0;
    while it < opts.max_iter {
        let grad: Vec<f64> = kx.iter().zip(g).map(|(a, b)| a + b).collect();
        let trial: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - step * gi).collect();
        let d: Vec<f64> = project(set, &trial).iter().zip(&x).map(|(p, xi)| p - xi).collect();
        let pg = d.iter().fold(0.0f64, |a, v| a.max(v.abs())) / step;
        if opts.log_every > 0 && it % opts.log_every == 0 {
            log.push(IterRecord { iteration: it, objective: objective(&x, &kx, g), residual: pg });
        }
        if pg <= coarse {
            break;
        }
        let kd = matvec(k, &d);
        let dkd = dot(&d, &kd);
        let gd = dot(&grad, &d);
        if dkd <= 0.0 || gd >= 0.0 {
            break;
        }
        let t = (-gd / dkd).min(1.0);
        for i in 0..m {
            x[i] += t * d[i];
            kx[i] += t * kd[i];
        }
        // Barzilai–Borwein: s = t d, y = K s
        let ss = t * t * dot(&d, &d);
        let sy = t * t * dkd;
        step = (ss / sy).clamp(1e-3 / diag_max, 1e6 / diag_max);
        it += 1;
    }
    if let ConstraintSet::Simplex = set {
        x = project_simplex(&x);
    } else {
        x.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    (x, it)
}

/// Projected SOR on `min x^T K x - 2 o^T x, x >= 0`, whose minimizer is the
/// minimum-energy element of `{x >= 0, K x >= o}`.
fn dual_sor(
    k: &DMatrix<f64>,
    obstacle: &[f64],
    x0: Option<&[f64]>,
    tol_abs: f64,
    opts: &QpOptions,
    log: &mut Vec<IterRecord>,
) -> (Vec<f64>, usize) {
    let m = obstacle.len();
    let data = k.as_slice();
    let mut x: Vec<f64> = match x0 {
        Some(v) => v.iter().map(|a| a.max(0.0)).collect(),
        None => vec![0.0; m],
    };
    let mut kx = matvec(k, &x);
    let omega = 1.5;
    let coarse = 1e3 * tol_abs;
    let max_sweeps = opts.max_iter.min(5000);
    let mut sweep = 0;
    while sweep < max_sweeps {
        let mut change = 0.0f64;
        for i in 0..m {
            let kii = data[i * m + i];
            let new = (x[i] + omega * (obstacle[i] - kx[i]) / kii).max(0.0);
            let delta = new - x[i];
            if delta != 0.0 {
                let col = &data[i * m..(i + 1) * m];
                for (v, c) in kx.iter_mut().zip(col) {
                    *v += delta * c;
                }
                x[i] = new;
                change = change.max((delta * kii).abs());
            }
        }
        sweep += 1;
        let violation = (0..m).fold(0.0f64, |a, i| a.max(obstacle[i] - kx[i]));
        if opts.log_every > 0 && sweep % opts.log_every == 0 {
            log.push(IterRecord { iteration: sweep, objective: dot(&x, &kx), residual: violation.max(change) });
        }
        if change <= coarse && violation <= coarse {
            break;
        }
    }
    (x, sweep)
}

enum Factor {
    Direct(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Iterative(DMatrix<f64>),
}

impl Factor {
    fn new(k: &DMatrix<f64>, s: &[usize]) -> Option<Factor> {
        let n = s.len();
        let mut sub = DMatrix::<f64>::zeros(n, n);
        let m = k.nrows();
        let data = k.as_slice();
        for (b, &j) in s.iter().enumerate() {
            for (a, &i) in s.iter().enumerate() {
                sub[(a, b)] = data[j * m + i];
            }
        }
        if n <= DIRECT_SOLVE_LIMIT {
            nalgebra::Cholesky::new(sub).map(Factor::Direct)
        } else {
            Some(Factor::Iterative(sub))
        }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            Factor::Direct(ch) => ch.solve(&DVector::from_column_slice(rhs)).as_slice().to_vec(),
            Factor::Iterative(sub) => pcg(sub, rhs),
        }
    }
}

/// Jacobi-preconditioned conjugate gradients to near machine precision.
fn pcg(a: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let inv_diag: Vec<f64> = (0..n).map(|i| 1.0 / a[(i, i)]).collect();
    let mut x: Vec<f64> = b.iter().zip(&inv_diag).map(|(b, d)| b * d).collect();
    let ax = matvec(a, &x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, v)| b - v).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let bnorm = dot(b, b).sqrt().max(f64::MIN_POSITIVE);
    for _ in 0..(4 * n).max(200) {
        if dot(&r, &r).sqrt() <= 1e-15 * bnorm {
            break;
        }
        let ap = matvec(a, &p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

/// Solution of the equality-constrained problem restricted to `s`.
fn reduced_solution(k: &DMatrix<f64>, g: &[f64], set: &ConstraintSet, s: &[usize]) -> Option<Vec<f64>> {
    let factor = Factor::new(k, s)?;
    let rhs: Vec<f64> = match set {
        ConstraintSet::NonnegObstacle { obstacle } => s.iter().map(|&i| obstacle[i]).collect(),
        _ => s.iter().map(|&i| -g[i]).collect(),
    };
    let v = factor.solve(&rhs);
    match set {
        ConstraintSet::Simplex => {
            let u = factor.solve(&vec![1.0; s.len()]);
            let su: f64 = u.iter().sum();
            let c = (1.0 - v.iter().sum::<f64>()) / su;
            Some(v.iter().zip(&u).map(|(v, u)| v + c * u).collect())
        }
        _ => Some(v),
    }
}

/// Primal active-set iterations started from `x`; returns the polished point
/// and the number of reduced solves.
fn polish(k: &DMatrix<f64>, g: &[f64], set: &ConstraintSet, mut x: Vec<f64>, tol_abs: f64) -> (Vec<f64>, usize) {
    let m = g.len();
    let max_w = x.iter().cloned().fold(0.0, f64::max);
    let thr = 1e-9 * max_w;
    let mut in_set: Vec<bool> = x.iter().map(|&v| v > thr).collect();
    for (v, &keep) in x.iter_mut().zip(&in_set) {
        if !keep {
            *v = 0.0;
        }
    }
    if let ConstraintSet::Simplex = set {
        let s: f64 = x.iter().sum();
        if s > 0.0 {
            x.iter_mut().for_each(|v| *v /= s);
        }
    }
    let start = x.clone();
    let mut steps = 0;
    let max_steps = 4 * m + 20;
    while steps < max_steps {
        let mut s: Vec<usize> = (0..m).filter(|&i| in_set[i]).collect();
        if s.is_empty() {
            // seed with the most attractive coordinate
            let kx = matvec(k, &x);
            let pick = match set {
                ConstraintSet::NonnegObstacle { obstacle } => {
                    (0..m).max_by(|&a, &b| (obstacle[a] - kx[a]).partial_cmp(&(obstacle[b] - kx[b])).unwrap())
                }
                _ => (0..m).min_by(|&a, &b| g[a].partial_cmp(&g[b]).unwrap()),
            }
            .unwrap();
            let needs = match set {
                ConstraintSet::NonnegObstacle { obstacle } => obstacle[pick] > 0.0,
                ConstraintSet::Nonneg => g[pick] < 0.0,
                ConstraintSet::Simplex => true,
            };
            if !needs {
                return (vec![0.0; m], steps);
            }
            in_set[pick] = true;
            s = vec![pick];
        }
        steps += 1;
        let Some(y_s) = reduced_solution(k, g, set, &s) else {
            return (start, steps);
        };
        if y_s.iter().any(|&v| v <= 0.0) {
            // move toward y until the first weight hits zero, then drop it
            let mut alpha = 1.0f64;
            for (a, &i) in s.iter().enumerate() {
                if y_s[a] <= 0.0 {
                    let denom = x[i] - y_s[a];
                    let t = if denom > 0.0 { x[i] / denom } else { 0.0 };
                    alpha = alpha.min(t);
                }
            }
            for (a, &i) in s.iter().enumerate() {
                x[i] += alpha * (y_s[a] - x[i]);
                if x[i] <= 1e-15 * max_w.max(1e-300) || y_s[a] <= 0.0 && x[i] <= 0.0 {
                    x[i] = 0.0;
                    in_set[i] = false;
                }
            }
            // a zero step must still shrink the set
            if alpha == 0.0 {
                for (a, &i) in s.iter().enumerate() {
                    if y_s[a] <= 0.0 && x[i] == 0.0 {
                        in_set[i] = false;
                    }
                }
            }
            continue;
        }
        for v in x.iter_mut() {
            *v = 0.0;
        }
        for (a, &i) in s.iter().enumerate() {
            x[i] = y_s[a];
        }
        let kx = matvec(k, &x);
        let (_, c) = residuals_from(set, &x, &kx, g);
        // rows outside the set whose multiplier is negative
        let mut violators: Vec<(f64, usize)> = (0..m)
            .filter(|&i| !in_set[i])
            .filter_map(|i| {
                let s_i = match set {
                    ConstraintSet::NonnegObstacle { obstacle } => kx[i] - obstacle[i],
                    _ => kx[i] + g[i] - c,
                };
                (s_i < -tol_abs).then_some((s_i, i))
            })
            .collect();
        if violators.is_empty() {
            return (x, steps);
        }
        violators.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let take = (violators.len().min(1 + s.len() / 20)).max(1);
        for &(_, i) in violators.iter().take(take) {
            in_set[i] = true;
        }
    }
    (x, steps)
}
