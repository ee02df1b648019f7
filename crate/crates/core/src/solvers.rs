// SPDX-License-Identifier: Apache-2.0

//! The four discrete minimum-energy problems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FieldVector, SourceMeasure};
use crate::geometry::NodeMask;
use crate::kernel::{DiscreteMeasure, KernelContext};
use crate::qp::{solve_qp, ConstraintSet, IterRecord, KktResiduals, QpOptions, QpResult};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Keep a coarse iteration log in the report.
    pub log: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-8, max_iter: 20_000, log: false }
    }
}

impl SolveOptions {
    fn qp(&self) -> QpOptions {
        QpOptions { tol: self.tol, max_iter: self.max_iter, log_every: if self.log { 10 } else { 0 } }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    Gauss,
    Capacitary,
    Balayage,
    MinEnergyInClass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub problem: Problem,
    /// Weights indexed by discretization node.
    pub minimizer: DiscreteMeasure,
    /// `w_f(A)` for the Gauss problem, the energy of the minimizer otherwise
    /// (for balayage: `I(nu) - 2 <nu, delta>`).
    pub objective: f64,
    /// `c_{A,f}` (Gauss); `w(A) = 1 / c(A)` for the capacitary problem.
    pub robin_constant: Option<f64>,
    pub eta: Option<f64>,
    pub capacity: Option<f64>,
    pub kkt: KktResiduals,
    pub iterations: usize,
    pub converged: bool,
    /// Absolute tolerance the KKT residuals were checked against.
    pub tolerance_used: f64,
    /// `delta^A(R^n) / delta(R^n)` (balayage).
    pub mass_ratio: Option<f64>,
    /// `max (U^{delta^A} - U^delta)` over nodes outside the mask (balayage).
    pub off_mask_excess: Option<f64>,
    /// `||delta^A - delta||` when `delta` lives on nodes (balayage).
    pub distance: Option<f64>,
    /// `| ||gamma||^2 - gamma(R^n) |` (capacitary).
    pub identity_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub log: Vec<IterRecord>,
}

/// JSON view with sparse `[index, weight]` pairs.
#[derive(Serialize)]
struct ReportJson<'a> {
    problem: Problem,
    weights: Vec<(usize, f64)>,
    total_mass: f64,
    objective: f64,
    robin_constant: Option<f64>,
    eta: Option<f64>,
    capacity: Option<f64>,
    kkt: KktResiduals,
    iterations: usize,
    converged: bool,
    tolerance_used: f64,
    mass_ratio: Option<f64>,
    off_mask_excess: Option<f64>,
    distance: Option<f64>,
    identity_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    log: Option<&'a [IterRecord]>,
}

impl SolveReport {
    pub fn to_json(&self, with_log: bool) -> Result<serde_json::Value> {
        let view = ReportJson {
            problem: self.problem,
            weights: self.minimizer.iter().collect(),
            total_mass: self.minimizer.total_mass(),
            objective: self.objective,
            robin_constant: self.robin_constant,
            eta: self.eta,
            capacity: self.capacity,
            kkt: self.kkt,
            iterations: self.iterations,
            converged: self.converged,
            tolerance_used: self.tolerance_used,
            mass_ratio: self.mass_ratio,
            off_mask_excess: self.off_mask_excess,
            distance: self.distance,
            identity_gap: self.identity_gap,
            log: with_log.then_some(self.log.as_slice()),
        };
        Ok(serde_json::to_value(view)?)
    }

    fn from_qp(problem: Problem, mask: &[usize], qp: QpResult) -> Self {
        let support: Vec<usize> = mask.iter().zip(&qp.x).filter(|(_, &w)| w > 0.0).map(|(&i, _)| i).collect();
        let weights: Vec<f64> = qp.x.iter().copied().filter(|&w| w > 0.0).collect();
        let minimizer = DiscreteMeasure::new(support, weights).expect("solver weights are nonnegative and distinct");
        SolveReport {
            problem,
            minimizer,
            objective: qp.objective,
            robin_constant: None,
            eta: None,
            capacity: None,
            kkt: qp.kkt,
            iterations: qp.iterations,
            converged: qp.converged,
            tolerance_used: qp.tol_abs,
            mass_ratio: None,
            off_mask_excess: None,
            distance: None,
            identity_gap: None,
            log: qp.log,
        }
    }
}

/// Sorted, deduplicated, range-checked copy of `mask`.
fn normalize_mask(ctx: &KernelContext, mask: &[usize]) -> Result<NodeMask> {
    let mut m = mask.to_vec();
    m.sort_unstable();
    m.dedup();
    for &i in &m {
        if i >= ctx.len() {
            return Err(Error::IndexOutOfRange { index: i, len: ctx.len() });
        }
    }
    if m.is_empty() {
        return Err(Error::config("mask", "the node set A is empty"));
    }
    Ok(m)
}

/// Gauss problem: minimize `x^T K x + 2 f^T x` over probability vectors on
/// the nodes of `mask` where `f < +inf`.
pub fn solve_gauss(ctx: &KernelContext, mask: &[usize], f: &FieldVector, opts: &SolveOptions) -> Result<SolveReport> {
    solve_gauss_from(ctx, mask, f, None, opts)
}

/// As [`solve_gauss`], with an optional feasible starting measure.
pub fn solve_gauss_from(
    ctx: &KernelContext,
    mask: &[usize],
    f: &FieldVector,
    start: Option<&DiscreteMeasure>,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    if f.len() != ctx.len() {
        return Err(Error::config("field", "field and kernel context differ in size"));
    }
    let mask = normalize_mask(ctx, mask)?;
    let adm = f.finite_nodes(&mask);
    if adm.is_empty() {
        return Err(Error::EmptyAdmissibleSet);
    }
    let k = ctx.submatrix(&adm);
    let g: Vec<f64> = adm.iter().map(|&i| f.values[i]).collect();
    let x0: Option<Vec<f64>> = start.map(|m| adm.iter().map(|&i| m.weight_at(i)).collect());
    let qp = solve_qp(&k, &g, &ConstraintSet::Simplex, x0.as_deref(), &opts.qp())?;
    let fx: f64 = g.iter().zip(&qp.x).map(|(a, b)| a * b).sum();
    let w = qp.objective;
    let mut r = SolveReport::from_qp(Problem::Gauss, &adm, qp);
    r.robin_constant = Some(w - fx);
    Ok(r)
}

/// Capacitary measure: minimum energy subject to `U^gamma >= 1` on `mask`,
/// computed as the minimizer of `x^T K x - 2 sum x` over `x >= 0`.
pub fn solve_capacitary(ctx: &KernelContext, mask: &[usize], opts: &SolveOptions) -> Result<SolveReport> {
    let mask = normalize_mask(ctx, mask)?;
    let k = ctx.submatrix(&mask);
    let g = vec![-1.0; mask.len()];
    let qp = solve_qp(&k, &g, &ConstraintSet::Nonneg, None, &opts.qp())?;
    let cap: f64 = qp.x.iter().sum();
    let energy = qp.objective + 2.0 * cap;
    let mut r = SolveReport::from_qp(Problem::Capacitary, &mask, qp);
    r.objective = energy;
    r.capacity = Some(cap);
    r.robin_constant = (cap > 0.0).then(|| 1.0 / cap);
    r.identity_gap = Some((energy - cap).abs());
    Ok(r)
}

/// Balayage of `delta` onto `mask`: the projection of `delta` onto the cone
/// of nonnegative measures carried by `mask` in the energy norm.
pub fn solve_balayage(ctx: &KernelContext, delta: &SourceMeasure, mask: &[usize], opts: &SolveOptions) -> Result<SolveReport> {
    let mask = normalize_mask(ctx, mask)?;
    let u = delta.potential_at_nodes(ctx)?;
    let k = ctx.submatrix(&mask);
    let g: Vec<f64> = mask.iter().map(|&i| -u[i]).collect();
    let qp = solve_qp(&k, &g, &ConstraintSet::Nonneg, None, &opts.qp())?;
    let mut r = SolveReport::from_qp(Problem::Balayage, &mask, qp);
    let dm = delta.total_mass();
    r.mass_ratio = (dm > 0.0).then(|| r.minimizer.total_mass() / dm);

    let outside: NodeMask = (0..ctx.len()).filter(|i| mask.binary_search(i).is_err()).collect();
    if !outside.is_empty() {
        let un = ctx.potential(&r.minimizer, &outside)?;
        r.off_mask_excess = Some(outside.iter().zip(&un).map(|(&i, v)| v - u[i]).fold(f64::NEG_INFINITY, f64::max));
    }
    if delta.off_grid.is_empty() {
        r.distance = Some(ctx.energy_distance(&r.minimizer, &delta.on_grid)?);
    }
    Ok(r)
}

/// Minimum energy over `{x >= 0 on search_support, (K x)_i >= obstacle_i for i in mask}`.
///
/// `obstacle` is indexed like `mask` (after sorting `mask`, entries follow
/// their node). `mask` must lie inside `search_support`; the minimizer is
/// then carried by `mask`.
pub fn solve_min_energy_in_class(
    ctx: &KernelContext,
    mask: &[usize],
    obstacle: &[f64],
    search_support: &[usize],
    opts: &SolveOptions,
) -> Result<SolveReport> {
    if obstacle.len() != mask.len() {
        return Err(Error::config("obstacle", "length differs from the mask"));
    }
    if let Some(v) = obstacle.iter().find(|v| !v.is_finite()) {
        return Err(Error::config("obstacle", format!("entry {v} makes the class empty")));
    }
    let mut pairs: Vec<(usize, f64)> = mask.iter().copied().zip(obstacle.iter().copied()).collect();
    pairs.sort_by_key(|p| p.0);
    if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::config("mask", "repeated node"));
    }
    let norm = normalize_mask(ctx, mask)?;
    let search = normalize_mask(ctx, search_support)?;
    if let Some(i) = norm.iter().find(|i| search.binary_search(i).is_err()) {
        return Err(Error::config("search_support", format!("constraint node {i} lies outside the search support")));
    }
    let k = ctx.submatrix(&norm);
    let o: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let qp = solve_qp(&k, &vec![0.0; norm.len()], &ConstraintSet::NonnegObstacle { obstacle: o }, None, &opts.qp())?;
    Ok(SolveReport::from_qp(Problem::MinEnergyInClass, &norm, qp))
}
