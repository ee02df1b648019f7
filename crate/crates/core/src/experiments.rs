// SPDX-License-Identifier: Apache-2.0

//! Sweeps over families of node sets: monotone convergence, thinness at
//! infinity and solvability probes on truncations of unbounded sets.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FieldVector, SourceMeasure};
use crate::geometry::{discretize, radial_coordinates, shell_decompose, Direction, GeometrySpec, MonotoneFamily, NodeMask};
use crate::kernel::{assemble_gram, DiscreteMeasure, KernelContext};
use crate::solvers::{solve_balayage, solve_capacitary, solve_gauss, SolveOptions, SolveReport};

/// Number of probe points for pointwise potential comparisons.
pub const PROBE_COUNT: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Check { name: name.into(), passed, detail }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub direction: Option<Direction>,
    pub labels: Vec<f64>,
    pub w_values: Vec<f64>,
    pub c_values: Vec<f64>,
    /// `||lambda_j - lambda_last||_K`; the last member is the limit set.
    pub energy_dists: Vec<f64>,
    pub mass_of_balayage: Option<Vec<f64>>,
    pub tail_mass_fraction: Option<Vec<f64>>,
    /// Largest increase of the probe potentials between consecutive members.
    pub probe_max_increase: Option<Vec<f64>>,
    pub converged: Vec<bool>,
    pub tol_abs: f64,
    pub checks: Vec<Check>,
    /// False if a member solve returned an error.
    pub complete: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl ConvergenceTrace {
    pub fn passed(&self) -> bool {
        self.complete && self.converged.iter().all(|&c| c) && self.checks.iter().all(|c| c.passed)
    }

    pub fn write(&self, dir: &Path, id: &str) -> Result<()> {
        write_json(dir, &format!("{id}.json"), self)?;
        let mut rows = Vec::new();
        for j in 0..self.labels.len() {
            let opt = |v: &Option<Vec<f64>>| v.as_ref().map(|v| v[j].to_string()).unwrap_or_default();
            rows.push(vec![
                self.labels[j].to_string(),
                self.w_values[j].to_string(),
                self.c_values[j].to_string(),
                self.energy_dists[j].to_string(),
                opt(&self.mass_of_balayage),
                opt(&self.tail_mass_fraction),
            ]);
        }
        write_csv(
            dir,
            &format!("{id}.csv"),
            &["label", "w", "c", "energy_dist", "balayage_mass", "tail_mass_fraction"],
            &rows,
        )
    }
}

pub(crate) fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(dir.join(name), s)?;
    Ok(())
}

pub(crate) fn write_csv(dir: &Path, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(name))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn halton(mut i: usize, base: usize) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// `count` Halton points in the bounding box of `points` (bases 2, 3, 5, ...).
pub fn probe_points(points: &[Vec<f64>], count: usize) -> Vec<Vec<f64>> {
    const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    let dim = points.first().map_or(0, |p| p.len());
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in points {
        for k in 0..dim {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (1..=count).map(|i| (0..dim).map(|k| lo[k] + (hi[k] - lo[k]) * halton(i, PRIMES[k % PRIMES.len()])).collect()).collect()
}

fn abs_tol(ctx: &KernelContext, opts: &SolveOptions) -> f64 {
    opts.tol * (0..ctx.len()).map(|i| ctx.diag(i)).fold(0.0, f64::max)
}

fn run_family(
    family: &MonotoneFamily,
    ctx: &KernelContext,
    f: &FieldVector,
    delta: Option<&SourceMeasure>,
    opts: &SolveOptions,
) -> (ConvergenceTrace, Vec<SolveReport>) {
    let mut t = ConvergenceTrace { direction: Some(family.direction), complete: true, tol_abs: abs_tol(ctx, opts), ..Default::default() };
    let mut reports = Vec::new();
    let mut masses = Vec::new();
    for (label, mask) in family.labels.iter().zip(&family.masks) {
        match solve_gauss(ctx, mask, f, opts) {
            Ok(r) => {
                t.labels.push(*label);
                t.w_values.push(r.objective);
                t.c_values.push(r.robin_constant.unwrap_or(f64::NAN));
                t.converged.push(r.converged);
                reports.push(r);
            }
            Err(e) => {
                t.complete = false;
                t.failure = Some(format!("member {label}: {e}"));
                return (t, reports);
            }
        }
        if let Some(d) = delta {
            match solve_balayage(ctx, d, mask, opts) {
                Ok(b) => masses.push(b.minimizer.total_mass()),
                Err(e) => {
                    t.complete = false;
                    t.failure = Some(format!("balayage on member {label}: {e}"));
                    return (t, reports);
                }
            }
        }
    }
    if delta.is_some() {
        t.mass_of_balayage = Some(masses);
    }
    let limit = &reports.last().expect("families are nonempty").minimizer;
    t.energy_dists = reports.iter().map(|r| ctx.energy_distance(&r.minimizer, limit).unwrap_or(f64::NAN)).collect();
    (t, reports)
}

fn monotone_check(name: &str, v: &[f64], tol: f64, nonincreasing: bool) -> Check {
    let worst = v
        .windows(2)
        .map(|w| if nonincreasing { w[1] - w[0] } else { w[0] - w[1] })
        .fold(f64::NEG_INFINITY, f64::max);
    let passed = v.len() < 2 || worst <= tol;
    Check::new(name, passed, format!("largest step against the expected direction {worst:.3e} (tol {tol:.3e})"))
}

fn dist_check(t: &ConvergenceTrace) -> Check {
    let first = t.energy_dists.first().copied().unwrap_or(0.0);
    let last = t.energy_dists.last().copied().unwrap_or(0.0);
    let passed = last <= first / 10.0 || last <= 100.0 * t.tol_abs;
    Check::new("energy_dists_vanish", passed, format!("first {first:.3e}, final {last:.3e}"))
}

/// Gauss solves along an increasing family; `delta` adds balayage masses.
pub fn run_monotone_increasing(
    family: &MonotoneFamily,
    ctx: &KernelContext,
    f: &FieldVector,
    delta: Option<&SourceMeasure>,
    opts: &SolveOptions,
) -> ConvergenceTrace {
    let (mut t, _) = run_family(family, ctx, f, delta, opts);
    if !t.complete {
        return t;
    }
    let tol = 10.0 * t.tol_abs;
    t.checks.push(monotone_check("w_nonincreasing", &t.w_values, tol, true));
    t.checks.push(dist_check(&t));
    if f.attractive_mass.is_some() {
        t.checks.push(monotone_check("c_nonincreasing", &t.c_values, tol, true));
    }
    t
}

/// Gauss solves along a decreasing family. In delta form with unit mass the
/// potentials of the minimizers are compared at [`PROBE_COUNT`] probe points.
pub fn run_monotone_decreasing(
    family: &MonotoneFamily,
    ctx: &KernelContext,
    f: &FieldVector,
    delta: Option<&SourceMeasure>,
    opts: &SolveOptions,
) -> ConvergenceTrace {
    let (mut t, reports) = run_family(family, ctx, f, delta, opts);
    if !t.complete {
        return t;
    }
    let tol = 10.0 * t.tol_abs;
    t.checks.push(monotone_check("w_nondecreasing", &t.w_values, tol, false));
    t.checks.push(dist_check(&t));
    if f.attractive_mass.is_some_and(|m| (m - 1.0).abs() <= 1e-12) {
        let probes = probe_points(&family.master.points, PROBE_COUNT);
        let pots: Vec<Vec<f64>> =
            reports.iter().map(|r| ctx.potential_at_points(&r.minimizer, &probes).unwrap_or_default()).collect();
        let inc: Vec<f64> = pots
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b - a).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let worst = inc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let bad: usize = pots.windows(2).map(|w| w[1].iter().zip(&w[0]).filter(|(b, a)| **b - **a > tol).count()).sum();
        t.checks.push(Check::new(
            "probe_potentials_nonincreasing",
            inc.is_empty() || worst <= tol,
            format!("largest increase {worst:.3e} (tol {tol:.3e}); {bad} probe comparisons above tol"),
        ));
        t.probe_max_increase = Some(inc);
    }
    t
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Diverging,
    Converging,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThinnessReport {
    pub q: f64,
    pub shells: Vec<i64>,
    pub shell_sizes: Vec<usize>,
    pub shell_capacities: Vec<f64>,
    /// `c(Q_k) / q^(k (n - alpha))`.
    pub summands: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// Local log-log slopes of the summands (base `q`).
    pub slopes: Vec<f64>,
    pub verdict: Verdict,
    pub slope_statistic: Option<f64>,
    /// Capacity of the union of the shells up to each `k`.
    pub cumulative_capacities: Vec<f64>,
    /// Last increment of the cumulative capacity over the previous one.
    pub capacity_increment_ratio: Option<f64>,
    /// Shells dropped because the truncation cuts through them.
    pub partial_shells: Vec<i64>,
    pub all_converged: bool,
}

impl ThinnessReport {
    /// Increments of the total capacity are not decaying geometrically.
    pub fn capacity_growing(&self) -> bool {
        self.capacity_increment_ratio.is_some_and(|r| r >= 0.75)
    }

    pub fn write(&self, dir: &Path, id: &str) -> Result<()> {
        write_json(dir, &format!("{id}.json"), self)?;
        let rows: Vec<Vec<String>> = (0..self.shells.len())
            .map(|j| {
                vec![
                    self.shells[j].to_string(),
                    self.shell_sizes[j].to_string(),
                    self.shell_capacities[j].to_string(),
                    self.summands[j].to_string(),
                    self.partial_sums[j].to_string(),
                    self.cumulative_capacities[j].to_string(),
                ]
            })
            .collect();
        write_csv(dir, &format!("{id}.csv"), &["k", "nodes", "capacity", "summand", "partial_sum", "cumulative_capacity"], &rows)
    }
}

/// Local slopes `log(a_{j+1} / a_j) / ((k_{j+1} - k_j) log q)`.
fn local_slopes(shells: &[i64], a: &[f64], q: f64) -> Vec<f64> {
    (1..a.len()).map(|j| (a[j] / a[j - 1]).ln() / ((shells[j] - shells[j - 1]) as f64 * q.ln())).collect()
}

/// Verdict from the last three slopes: all below -1/2 means converging; a
/// last slope of at least -1/2 on a non-decreasing run (or any nonnegative
/// last slope) means diverging.
pub fn slope_verdict(slopes: &[f64]) -> Verdict {
    let Some(&last) = slopes.last() else {
        return Verdict::Inconclusive;
    };
    let tail = &slopes[slopes.len().saturating_sub(3)..];
    if tail.iter().all(|&s| s < -0.5) {
        return Verdict::Converging;
    }
    let flattening = tail.windows(2).all(|w| w[1] >= w[0] - 0.02);
    if last >= 0.0 || (last >= -0.5 && flattening) {
        return Verdict::Diverging;
    }
    Verdict::Inconclusive
}

/// Per-shell capacities of `d` (shells of base `q` with `k >= 0`) and the
/// partial sums of the thinness series.
pub fn classify_thinness(d: &crate::geometry::Discretization, ctx: &KernelContext, q: f64, opts: &SolveOptions) -> Result<ThinnessReport> {
    let shells_map = shell_decompose(d, q)?;
    let p = d.dim as f64 - ctx.alpha;
    let mut partial_shells = Vec::new();
    let mut shells = Vec::new();
    let mut sets: Vec<NodeMask> = Vec::new();
    for (&k, nodes) in &shells_map {
        if k < 0 {
            continue;
        }
        if let Some(r) = d.truncation_radius {
            if r < q.powi(k as i32 + 1) * (1.0 - 1e-9) && r < q.powi(k as i32) * q.sqrt() {
                // less than half the shell (in log scale) is present
                partial_shells.push(k);
                continue;
            }
        }
        shells.push(k);
        sets.push(nodes.clone());
    }
    let mut all_converged = true;
    let mut caps = Vec::new();
    let mut cumulative = Vec::new();
    let mut union: NodeMask = Vec::new();
    for nodes in &sets {
        let r = solve_capacitary(ctx, nodes, opts)?;
        all_converged &= r.converged;
        caps.push(r.capacity.unwrap_or(0.0));
        union.extend(nodes);
        let u = solve_capacitary(ctx, &union, opts)?;
        all_converged &= u.converged;
        cumulative.push(u.capacity.unwrap_or(0.0));
    }
    let summands: Vec<f64> = shells.iter().zip(&caps).map(|(&k, c)| c / q.powf(k as f64 * p)).collect();
    let partial_sums: Vec<f64> = summands
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s;
            Some(*acc)
        })
        .collect();
    let slopes = local_slopes(&shells, &summands, q);
    let verdict = if shells.len() < 4 { Verdict::Inconclusive } else { slope_verdict(&slopes) };
    let inc: Vec<f64> = cumulative.windows(2).map(|w| w[1] - w[0]).collect();
    let capacity_increment_ratio = (inc.len() >= 2).then(|| inc[inc.len() - 1] / inc[inc.len() - 2]);
    Ok(ThinnessReport {
        q,
        shell_sizes: sets.iter().map(|s| s.len()).collect(),
        shells,
        shell_capacities: caps,
        summands,
        partial_sums,
        slope_statistic: slopes.last().copied(),
        slopes,
        verdict,
        cumulative_capacities: cumulative,
        capacity_increment_ratio,
        partial_shells,
        all_converged,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolvabilityVerdict {
    SolvableLike,
    UnsolvableLike,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolvabilityTrace {
    pub labels: Vec<f64>,
    pub delta_mass: f64,
    pub balayage_mass: Vec<f64>,
    pub robin_constants: Vec<f64>,
    /// Minimizer mass in the outermost shell `R/q < r <= R`.
    pub tail_mass_fraction: Vec<f64>,
    /// Radius holding 99.9% of the minimizer's mass.
    pub mass_radius: Vec<f64>,
    /// Aitken extrapolation of the last three balayage masses.
    pub extrapolated_mass: f64,
    pub tail_vanishing: bool,
    pub c_plateau: Option<f64>,
    pub c_to_zero: bool,
    pub radius_stable: bool,
    pub verdict: SolvabilityVerdict,
    pub checks: Vec<Check>,
    pub all_converged: bool,
}

impl SolvabilityTrace {
    pub fn write(&self, dir: &Path, id: &str) -> Result<()> {
        write_json(dir, &format!("{id}.json"), self)?;
        let rows: Vec<Vec<String>> = (0..self.labels.len())
            .map(|j| {
                vec![
                    self.labels[j].to_string(),
                    self.balayage_mass[j].to_string(),
                    self.robin_constants[j].to_string(),
                    self.tail_mass_fraction[j].to_string(),
                    self.mass_radius[j].to_string(),
                ]
            })
            .collect();
        write_csv(dir, &format!("{id}.csv"), &["R", "balayage_mass", "c", "tail_mass_fraction", "mass_radius"], &rows)
    }

    pub fn passed(&self) -> bool {
        self.all_converged && self.checks.iter().all(|c| c.passed)
    }
}

/// Last three values within 1% of the last one.
pub fn plateau(v: &[f64]) -> bool {
    if v.len() < 3 {
        return false;
    }
    let last = v[v.len() - 1];
    v[v.len() - 3..].iter().all(|x| (x - last).abs() <= 0.01 * last.abs())
}

/// Aitken's delta-squared limit of the last three entries; the last entry
/// when the increments do not shrink.
pub fn aitken_limit(v: &[f64]) -> f64 {
    let n = v.len();
    let last = v.last().copied().unwrap_or(f64::NAN);
    if n < 3 {
        return last;
    }
    let (d1, d2) = (v[n - 2] - v[n - 3], v[n - 1] - v[n - 2]);
    let denom = d2 - d1;
    if d2.abs() < d1.abs() && d1 * d2 > 0.0 && denom != 0.0 {
        last - d2 * d2 / denom
    } else {
        last
    }
}

/// Balayage and Gauss solves for `f = -U^delta` on the truncations
/// `{r <= R}` of one discretization of `spec` (with `r` as in
/// [`radial_coordinates`]), for each `R` of the increasing `sweep`.
pub fn probe_solvability(
    spec: &GeometrySpec,
    alpha: f64,
    delta: &SourceMeasure,
    sweep: &[f64],
    opts: &SolveOptions,
) -> Result<SolvabilityTrace> {
    if sweep.len() < 3 || sweep.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config("sweep", "need at least three increasing truncation radii"));
    }
    let d = discretize(spec)?;
    let ctx = assemble_gram(&d, alpha)?;
    let radial = radial_coordinates(spec, &d)?;
    let q = spec.shell_base.unwrap_or(2.0);
    let u = delta.potential_at_nodes(&ctx)?;
    let f = FieldVector { values: u.iter().map(|v| -v).collect(), attractive_mass: Some(delta.total_mass()), ..Default::default() };
    let mut bal = Vec::new();
    let mut cs = Vec::new();
    let mut tails = Vec::new();
    let mut radii = Vec::new();
    let mut all_converged = true;
    for &r in sweep {
        let slack = 1e-9 * r;
        let mask: NodeMask = (0..d.len()).filter(|&i| radial[i] <= r + slack).collect();
        if mask.is_empty() {
            return Err(Error::config("sweep", format!("truncation R = {r} contains no node")));
        }
        let b = solve_balayage(&ctx, delta, &mask, opts)?;
        let g = solve_gauss(&ctx, &mask, &f, opts)?;
        all_converged &= b.converged && g.converged;
        bal.push(b.minimizer.total_mass());
        cs.push(g.robin_constant.unwrap_or(f64::NAN));
        let tail: f64 = g.minimizer.iter().filter(|&(i, _)| radial[i] > r / q + slack).map(|(_, w)| w).sum();
        tails.push(tail / g.minimizer.total_mass());
        radii.push(radial_mass_radius(&g.minimizer, &radial, 0.999));
    }
    let delta_mass = delta.total_mass();
    let extrapolated_mass = aitken_limit(&bal);
    let n = tails.len();
    let tail_vanishing = tails[n - 1] <= 0.01 || tails[n - 1] <= 0.6 * tails[n - 2];
    let mass_to_one = extrapolated_mass >= 0.98;
    let shrinking = (bal[n - 1] - bal[n - 2]).abs() <= (bal[n - 2] - bal[n - 3]).abs();
    let verdict = if mass_to_one && tail_vanishing {
        SolvabilityVerdict::SolvableLike
    } else if !mass_to_one && shrinking && !tail_vanishing {
        SolvabilityVerdict::UnsolvableLike
    } else {
        SolvabilityVerdict::Inconclusive
    };
    let c_plateau = plateau(&cs).then(|| cs[n - 1]);
    let c_to_zero = cs.windows(2).all(|w| w[1].abs() < w[0].abs()) && cs[n - 1].abs() <= cs[0].abs() / 10.0;
    let radius_stable = plateau(&radii);

    let mut checks = vec![Check::new(
        "balayage_mass_bounded",
        bal.iter().all(|&m| m <= delta_mass * (1.0 + 1e-9) + 1e-12),
        format!("max balayage mass {:.6} vs delta mass {delta_mass}", bal.iter().cloned().fold(0.0, f64::max)),
    )];
    if delta_mass > 1.0 {
        checks.push(Check::new(
            "robin_plateau_negative",
            c_plateau.is_some_and(|c| c < 0.0),
            format!("c sequence {cs:?}"),
        ));
        checks.push(Check::new("mass_radius_stable", radius_stable, format!("99.9% radii {radii:?}")));
    }
    Ok(SolvabilityTrace {
        labels: sweep.to_vec(),
        delta_mass,
        balayage_mass: bal,
        robin_constants: cs,
        tail_mass_fraction: tails,
        mass_radius: radii,
        extrapolated_mass,
        tail_vanishing,
        c_plateau,
        c_to_zero,
        radius_stable,
        verdict,
        checks,
        all_converged,
    })
}

fn radial_mass_radius(mu: &DiscreteMeasure, radial: &[f64], fraction: f64) -> f64 {
    let mut items: Vec<(f64, f64)> = mu.iter().map(|(i, w)| (radial[i], w)).collect();
    items.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let target = fraction * mu.total_mass();
    let mut acc = 0.0;
    for (r, w) in items {
        acc += w;
        if acc >= target {
            return r;
        }
    }
    0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Discretization, BOUNDARY};
    use nalgebra::DMatrix;

    fn ctx_from(k: &[f64], m: usize) -> KernelContext {
        KernelContext {
            dim: 3,
            alpha: 2.0,
            gram: DMatrix::from_row_slice(m, m, k),
            diagonal_rule: vec![],
            points: (0..m).map(|i| vec![i as f64, 0.0, 0.0]).collect(),
        }
    }

    fn family(m: usize, direction: Direction, masks: Vec<NodeMask>) -> MonotoneFamily {
        let pts = (0..m).map(|i| vec![i as f64, 0.0, 0.0]).collect();
        MonotoneFamily {
            master: Discretization::from_points(3, pts, BOUNDARY).unwrap(),
            direction,
            labels: (1..=masks.len()).map(|j| j as f64).collect(),
            masks,
        }
    }

    const K3: [f64; 9] = [10.0, 2.0, 1.0, 2.0, 9.0, 3.0, 1.0, 3.0, 12.0];

    #[test]
    fn constant_family_is_flat() {
        let ctx = ctx_from(&K3, 3);
        let fam = family(3, Direction::Increasing, vec![vec![0, 1, 2]; 3]);
        let t = run_monotone_increasing(&fam, &ctx, &FieldVector::zero(3), None, &SolveOptions::default());
        assert!(t.passed());
        assert!(t.energy_dists.iter().all(|&d| d <= 10.0 * t.tol_abs));
        assert!(t.w_values.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn two_member_family_against_grid() {
        let ctx = ctx_from(&K3, 3);
        let fam = family(3, Direction::Increasing, vec![vec![0, 1], vec![0, 1, 2]]);
        let t = run_monotone_increasing(&fam, &ctx, &FieldVector::zero(3), None, &SolveOptions::default());
        assert!(t.passed());
        // brute force over the simplex with step 1e-3
        let k = DMatrix::from_row_slice(3, 3, &K3);
        let steps = 1000;
        let mut best_k = f64::INFINITY;
        let mut best_a = f64::INFINITY;
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let x = nalgebra::DVector::from_vec(vec![i as f64 / 1e3, j as f64 / 1e3, (steps - i - j) as f64 / 1e3]);
                let e = x.dot(&(&k * &x));
                best_a = best_a.min(e);
                if i + j == steps {
                    best_k = best_k.min(e);
                }
            }
        }
        assert!((t.w_values[0] - best_k).abs() < 1e-3 && (t.w_values[1] - best_a).abs() < 1e-3);
        assert!(t.w_values[0] >= t.w_values[1]);
    }

    #[test]
    fn two_node_decreasing_toy() {
        let ctx = ctx_from(&[10.0, 2.0, 2.0, 8.0], 2);
        let fam = family(2, Direction::Decreasing, vec![vec![0, 1], vec![0]]);
        let t = run_monotone_decreasing(&fam, &ctx, &FieldVector::zero(2), None, &SolveOptions::default());
        assert!(t.passed());
        // 2x2: (d1 d2 - k^2) / (d1 + d2 - 2k); 1x1: d1
        assert!((t.w_values[0] - (80.0 - 4.0) / 14.0).abs() < 1e-12);
        assert!((t.w_values[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn slope_rules() {
        assert_eq!(slope_verdict(&[-1.4, -0.48, -0.42, -0.32]), Verdict::Diverging);
        assert_eq!(slope_verdict(&[-2.0, -1.0, -0.99, -0.97]), Verdict::Converging);
        assert_eq!(slope_verdict(&[-0.2, -0.4, -0.45]), Verdict::Inconclusive);
        assert_eq!(slope_verdict(&[]), Verdict::Inconclusive);
    }

    #[test]
    fn single_shell_is_inconclusive() {
        let pts = vec![vec![1.1, 0.0, 0.0], vec![1.5, 0.0, 0.0], vec![1.2, 0.3, 0.0]];
        let mut d = Discretization::from_points(3, pts, BOUNDARY).unwrap();
        d.assign_shells(2.0).unwrap();
        let ctx = crate::kernel::assemble_gram(&d, 2.0).unwrap();
        let r = classify_thinness(&d, &ctx, 2.0, &SolveOptions::default()).unwrap();
        assert_eq!(r.shells, vec![0]);
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn aitken_and_plateau() {
        let v: Vec<f64> = (0..6).map(|k| 1.0 - 0.5f64.powi(k)).collect();
        assert!((aitken_limit(&v) - 1.0).abs() < 1e-12);
        assert!(plateau(&[3.0, 1.0, 1.005, 1.0]));
        assert!(!plateau(&[1.0, 1.05, 1.1]));
    }

    #[test]
    fn probes_fill_the_box() {
        let p = probe_points(&[vec![-1.0, 0.0], vec![1.0, 2.0]], 100);
        assert_eq!(p.len(), 100);
        assert!(p.iter().all(|x| (-1.0..=1.0).contains(&x[0]) && (0.0..=2.0).contains(&x[1])));
        assert_eq!(p, probe_points(&[vec![-1.0, 0.0], vec![1.0, 2.0]], 100));
    }
}
