// SPDX-License-Identifier: Apache-2.0

//! Certificates for computed minimizers: the characteristic inequalities,
//! the balayage representation, the constancy of the weighted potential and
//! support descriptions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FieldVector, SourceMeasure};
use crate::geometry::{Discretization, NodeMask, BOUNDARY};
use crate::kernel::{DiscreteMeasure, KernelContext};
use crate::solvers::{solve_balayage, solve_capacitary, solve_gauss, SolveOptions, SolveReport};

/// Default support threshold, relative to `total mass / N`.
pub const SUPPORT_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrostmanReport {
    /// `int U^mu_f d mu`.
    pub c1: f64,
    /// `w_f(A) - int f d mu`.
    pub c2: f64,
    pub min_over_a: f64,
    pub max_dev_on_support: f64,
    pub mass_defect: f64,
    pub tol_abs: f64,
    pub passed: bool,
}

/// `tol` relative to the largest Gram diagonal on the admissible nodes.
fn abs_tol(ctx: &KernelContext, nodes: &[usize], tol: f64) -> f64 {
    tol * nodes.iter().map(|&i| ctx.diag(i)).fold(0.0, f64::max)
}

fn sorted_mask(ctx: &KernelContext, mask: &[usize]) -> Result<NodeMask> {
    let mut m = mask.to_vec();
    m.sort_unstable();
    m.dedup();
    if let Some(&i) = m.iter().find(|&&i| i >= ctx.len()) {
        return Err(Error::IndexOutOfRange { index: i, len: ctx.len() });
    }
    Ok(m)
}

/// Nodes carrying more than `factor * mass / N` (`N` = number of candidate nodes).
pub fn support_above(mu: &DiscreteMeasure, n: usize, factor: f64) -> NodeMask {
    let thr = factor * mu.total_mass() / n.max(1) as f64;
    mu.iter().filter(|&(_, w)| w > thr).map(|(i, _)| i).collect()
}

/// Checks the two characteristic inequalities for a probability measure `mu`
/// on `mask`. `w_f` is the minimum value if already known; otherwise a Gauss
/// solve supplies it.
pub fn check_frostman(
    ctx: &KernelContext,
    mask: &[usize],
    f: &FieldVector,
    mu: &DiscreteMeasure,
    tol: f64,
    w_f: Option<f64>,
) -> Result<FrostmanReport> {
    let mask = sorted_mask(ctx, mask)?;
    let adm = f.finite_nodes(&mask);
    if adm.is_empty() {
        return Err(Error::EmptyAdmissibleSet);
    }
    let tol_abs = abs_tol(ctx, &adm, tol);
    let u = ctx.potential(mu, &adm)?;
    let uf: Vec<f64> = adm.iter().zip(&u).map(|(&i, v)| v + f.values[i]).collect();
    let charges_outside = mu.support().iter().any(|i| adm.binary_search(i).is_err());

    let fmu: f64 = mu.iter().map(|(i, w)| w * f.values[i]).sum();
    let c1: f64 = adm.iter().zip(&uf).map(|(&i, v)| mu.weight_at(i) * v).sum();
    let w = match w_f {
        Some(w) => w,
        None => solve_gauss(ctx, &adm, f, &SolveOptions { tol, ..Default::default() })?.objective,
    };
    let c2 = w - fmu;
    let min_over_a = uf.iter().cloned().fold(f64::INFINITY, f64::min);
    let supp = support_above(mu, adm.len(), SUPPORT_THRESHOLD);
    let max_dev_on_support = adm
        .iter()
        .zip(&uf)
        .filter(|(i, _)| supp.binary_search(i).is_ok())
        .map(|(_, v)| (v - c1).abs())
        .fold(0.0, f64::max);
    let mass_defect = (mu.total_mass() - 1.0).abs();
    let passed = !charges_outside
        && mass_defect <= tol_abs
        && min_over_a >= c1 - tol_abs
        && max_dev_on_support <= tol_abs
        && (c1 - c2).abs() <= tol_abs;
    Ok(FrostmanReport { c1, c2, min_over_a, max_dev_on_support, mass_defect, tol_abs, passed })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentationReport {
    pub balayage_mass: f64,
    pub capacity: f64,
    pub eta: f64,
    pub robin_constant: f64,
    /// `|| lambda - delta^A - eta gamma_A ||_K`.
    pub residual: f64,
    /// `residual / || lambda ||_K`.
    pub relative_residual: f64,
    /// `|c_{A,f} - eta|`.
    pub constant_gap: f64,
    pub converged: bool,
    pub balayage: SolveReport,
    pub capacitary: SolveReport,
}

impl RepresentationReport {
    pub fn passes(&self, bound: f64) -> bool {
        self.converged && self.relative_residual <= bound && self.constant_gap <= bound
    }

    /// `delta^A + eta gamma_A` on `n` nodes.
    pub fn predicted(&self, n: usize) -> Result<DiscreteMeasure> {
        self.balayage.minimizer.add_scaled(&self.capacitary.minimizer, self.eta.max(0.0), n)
    }
}

/// Compares a Gauss minimizer for `f = -U^delta` with `delta^A + eta gamma_A`,
/// `eta = (1 - delta^A(R^n)) / c(A)`.
pub fn check_representation(
    ctx: &KernelContext,
    mask: &[usize],
    delta: &SourceMeasure,
    gauss: &SolveReport,
    opts: &SolveOptions,
) -> Result<RepresentationReport> {
    let balayage = solve_balayage(ctx, delta, mask, opts)?;
    let capacitary = solve_capacitary(ctx, mask, opts)?;
    let capacity = capacitary.capacity.unwrap_or(0.0);
    if capacity <= 0.0 {
        return Err(Error::Domain("zero capacity; eta is undefined".into()));
    }
    let balayage_mass = balayage.minimizer.total_mass();
    let eta = (1.0 - balayage_mass) / capacity;
    let n = ctx.len();
    let lam = gauss.minimizer.to_dense(n);
    let mut diff = lam.clone();
    for (i, w) in balayage.minimizer.iter() {
        diff[i] -= w;
    }
    for (i, w) in capacitary.minimizer.iter() {
        diff[i] -= eta * w;
    }
    let residual = ctx.quadratic_form(&diff).max(0.0).sqrt();
    let norm = ctx.quadratic_form(&lam).max(0.0).sqrt();
    let robin_constant = gauss.robin_constant.ok_or_else(|| Error::config("gauss", "report has no Robin constant"))?;
    Ok(RepresentationReport {
        balayage_mass,
        capacity,
        eta,
        robin_constant,
        residual,
        relative_residual: if norm > 0.0 { residual / norm } else { residual },
        constant_gap: (robin_constant - eta).abs(),
        converged: gauss.converged && balayage.converged && capacitary.converged,
        balayage,
        capacitary,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationReport {
    pub eta: f64,
    /// `max over the mask of |U^lambda_f - eta|`.
    pub max_deviation: f64,
    pub tol_abs: f64,
    pub passed: bool,
}

/// Checks `U^lambda_f = eta` at every node of `mask`. `eta` is computed from
/// the balayage and capacitary measures when not given.
pub fn check_characterization_iii(
    ctx: &KernelContext,
    mask: &[usize],
    delta: &SourceMeasure,
    lambda: &DiscreteMeasure,
    eta: Option<f64>,
    tol: f64,
) -> Result<CharacterizationReport> {
    let mask = sorted_mask(ctx, mask)?;
    let opts = SolveOptions { tol, ..Default::default() };
    let eta = match eta {
        Some(e) => e,
        None => {
            let b = solve_balayage(ctx, delta, &mask, &opts)?;
            let c = solve_capacitary(ctx, &mask, &opts)?;
            (1.0 - b.minimizer.total_mass()) / c.capacity.unwrap_or(f64::NAN)
        }
    };
    let ud = delta.potential_at_nodes(ctx)?;
    let ul = ctx.potential(lambda, &mask)?;
    let max_deviation = mask.iter().zip(&ul).map(|(&i, v)| (v - ud[i] - eta).abs()).fold(0.0, f64::max);
    let tol_abs = 10.0 * abs_tol(ctx, &mask, tol);
    Ok(CharacterizationReport { eta, max_deviation, tol_abs, passed: max_deviation <= tol_abs })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupportPrediction {
    /// Every node of the mask.
    FullA { mask: NodeMask },
    /// Mask nodes tagged "boundary".
    BoundaryUnion { mask: NodeMask },
    /// Nodes within the 99.9%-mass radius.
    CompactCore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    pub support_nodes: NodeMask,
    pub predicted_nodes: NodeMask,
    pub jaccard: f64,
    pub boundary_fraction: f64,
    pub threshold: f64,
    /// Radius about the origin of the smallest ball holding 99.9% of the mass.
    pub mass_radius: f64,
}

pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Smallest `r` with `mu(|x| <= r) >= fraction * mu(R^n)`.
pub fn mass_radius(mu: &DiscreteMeasure, d: &Discretization, fraction: f64) -> f64 {
    let mut items: Vec<(f64, f64)> = mu.iter().map(|(i, w)| (d.norm(i), w)).collect();
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

/// Support of `mu` above `factor * mass / N` (with `N` the number of nodes
/// of `d`) compared with a predicted node set.
pub fn extract_support(mu: &DiscreteMeasure, d: &Discretization, factor: f64, prediction: &SupportPrediction) -> SupportReport {
    let n = d.len();
    let threshold = factor * mu.total_mass() / n.max(1) as f64;
    let support_nodes = support_above(mu, n, factor);
    let mass_radius = mass_radius(mu, d, 0.999);
    let predicted_nodes: NodeMask = match prediction {
        SupportPrediction::FullA { mask } => {
            let mut m = mask.clone();
            m.sort_unstable();
            m.dedup();
            m
        }
        SupportPrediction::BoundaryUnion { mask } => {
            let mut m: NodeMask = mask.iter().copied().filter(|&i| d.region_tag[i] == BOUNDARY).collect();
            m.sort_unstable();
            m.dedup();
            m
        }
        SupportPrediction::CompactCore => (0..n).filter(|&i| d.norm(i) <= mass_radius && mu.weight_at(i) > 0.0).collect(),
    };
    let boundary_mass: f64 = mu.iter().filter(|&(i, _)| d.region_tag[i] == BOUNDARY).map(|(_, w)| w).sum();
    let total = mu.total_mass();
    SupportReport {
        jaccard: jaccard(&support_nodes, &predicted_nodes),
        support_nodes,
        predicted_nodes,
        boundary_fraction: if total > 0.0 { boundary_mass / total } else { 0.0 },
        threshold,
        mass_radius,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateEntry {
    pub instance: String,
    pub check: String,
    pub passed: bool,
    pub detail: serde_json::Value,
}

/// Per-instance pass/fail list.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub entries: Vec<CertificateEntry>,
}

impl Certificate {
    pub fn push<T: Serialize>(&mut self, instance: &str, check: &str, passed: bool, detail: &T) -> Result<()> {
        self.entries.push(CertificateEntry {
            instance: instance.into(),
            check: check.into(),
            passed,
            detail: serde_json::to_value(detail)?,
        });
        Ok(())
    }

    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn to_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::json!({ "passed": self.passed(), "entries": self.entries }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
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

    #[test]
    fn frostman_accepts_minimizer_and_rejects_uniform() {
        let ctx = ctx_from(&[10.0, 1.0, 0.5, 1.0, 12.0, 3.0, 0.5, 3.0, 20.0], 3);
        let f = FieldVector::zero(3);
        let r = solve_gauss(&ctx, &[0, 1, 2], &f, &SolveOptions::default()).unwrap();
        let ok = check_frostman(&ctx, &[0, 1, 2], &f, &r.minimizer, 1e-8, Some(r.objective)).unwrap();
        assert!(ok.passed);
        assert!((ok.c1 - ok.c2).abs() < 1e-12);
        let uniform = DiscreteMeasure::new(vec![0, 1, 2], vec![1.0 / 3.0; 3]).unwrap();
        let bad = check_frostman(&ctx, &[0, 1, 2], &f, &uniform, 1e-8, None).unwrap();
        assert!(!bad.passed && bad.min_over_a < bad.c1);
    }

    #[test]
    fn normalized_capacitary_measure_is_frostman() {
        let ctx = ctx_from(&[10.0, 1.0, 0.5, 1.0, 12.0, 3.0, 0.5, 3.0, 20.0], 3);
        let g = solve_capacitary(&ctx, &[0, 1, 2], &SolveOptions::default()).unwrap();
        let c = g.capacity.unwrap();
        let mu = g.minimizer.scaled(1.0 / c).unwrap();
        let r = check_frostman(&ctx, &[0, 1, 2], &FieldVector::zero(3), &mu, 1e-8, None).unwrap();
        assert!(r.passed);
        assert!((r.c1 - 1.0 / c).abs() < 1e-12 && (r.c2 - 1.0 / c).abs() < 1e-12);
    }

    #[test]
    fn representation_without_delta() {
        let ctx = ctx_from(&[10.0, 2.0, 2.0, 10.0], 2);
        let g = solve_gauss(&ctx, &[0, 1], &FieldVector::zero(2), &SolveOptions::default()).unwrap();
        let r = check_representation(&ctx, &[0, 1], &SourceMeasure::default(), &g, &SolveOptions::default()).unwrap();
        assert!((r.eta - 1.0 / r.capacity).abs() < 1e-14);
        assert!(r.passes(1e-7));
    }

    #[test]
    fn characterization_iii_detects_perturbation() {
        let ctx = ctx_from(&[10.0, 2.0, 2.0, 10.0], 2);
        let lam = DiscreteMeasure::new(vec![0, 1], vec![0.5, 0.5]).unwrap();
        let ok = check_characterization_iii(&ctx, &[0, 1], &SourceMeasure::default(), &lam, None, 1e-8).unwrap();
        assert!(ok.passed && (ok.eta - 6.0).abs() < 1e-12);
        let moved = DiscreteMeasure::new(vec![0, 1], vec![0.505, 0.495]).unwrap();
        assert!(!check_characterization_iii(&ctx, &[0, 1], &SourceMeasure::default(), &moved, None, 1e-8).unwrap().passed);
    }

    #[test]
    fn empty_support_has_zero_jaccard() {
        let d = Discretization::from_points(3, vec![vec![0.0; 3]], BOUNDARY).unwrap();
        let r = extract_support(&DiscreteMeasure::zero(), &d, SUPPORT_THRESHOLD, &SupportPrediction::FullA { mask: vec![0] });
        assert!(r.support_nodes.is_empty());
        assert_eq!(r.jaccard, 0.0);
        assert_eq!(jaccard(&[1, 2, 3], &[2, 3, 4]), 0.5);
    }
}
