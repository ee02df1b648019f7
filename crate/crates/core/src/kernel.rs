// SPDX-License-Identifier: Apache-2.0

//! Riesz kernel `|x - y|^(alpha - n)`, the regularized Gram matrix and the
//! quadratic forms built on it (potentials, energies, energy distance).

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist2, CellShape, Discretization, NodeMask};
use crate::quad::{ball_average, band_average};

/// How the self-interaction `K_ii` of node `i` was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DiagonalRule {
    /// Mean of the kernel over the ball `B(x_i, radius)`: `(n/alpha) radius^(alpha-n)`.
    BallAverage { radius: f64 },
    /// Self-energy of a unit charge spread uniformly over a cylindrical band.
    BandAverage { radius: f64, length: f64 },
}

/// Kernel order and dimension together with the assembled Gram matrix.
#[derive(Clone, Debug)]
pub struct KernelContext {
    pub dim: usize,
    pub alpha: f64,
    /// Symmetric, column-major; column `j` is also row `j`.
    pub gram: DMatrix<f64>,
    pub diagonal_rule: Vec<DiagonalRule>,
    pub points: Vec<Vec<f64>>,
}

/// Nonnegative weights on node indices.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    support: Vec<usize>,
    weights: Vec<f64>,
    total_mass: f64,
}

/// Hahn–Jordan pair `plus - minus` with disjoint supports.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SignedMeasure {
    pub plus: DiscreteMeasure,
    pub minus: DiscreteMeasure,
}

/// Nonnegative point masses at arbitrary positions (sources off the node set).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointMasses {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

pub(crate) fn check_alpha(dim: usize, alpha: f64) -> Result<()> {
    if dim < 2 {
        return Err(Error::config("dim", format!("must be at least 2, got {dim}")));
    }
    if !(alpha > 0.0 && alpha < dim as f64) {
        return Err(Error::config("alpha", format!("need 0 < alpha < n = {dim}, got {alpha}")));
    }
    Ok(())
}

#[inline]
fn riesz_from_d2(d2: f64, exponent: f64) -> f64 {
    let d = d2.sqrt();
    if exponent == -1.0 {
        1.0 / d
    } else {
        d.powf(exponent)
    }
}

/// `|x - y|^(alpha - n)`; undefined on the diagonal.
pub fn kernel_value(x: &[f64], y: &[f64], dim: usize, alpha: f64) -> Result<f64> {
    check_alpha(dim, alpha)?;
    if x.len() != dim || y.len() != dim {
        return Err(Error::Domain(format!("points must have {dim} coordinates")));
    }
    let d2 = dist2(x, y);
    if d2 == 0.0 {
        return Err(Error::Domain("kernel evaluated at x = y".into()));
    }
    Ok(riesz_from_d2(d2, alpha - dim as f64))
}

/// Assembles the Gram matrix of `d`: exact kernel values off the diagonal,
/// cell averages on it.
pub fn assemble_gram(d: &Discretization, alpha: f64) -> Result<KernelContext> {
    check_alpha(d.dim, alpha)?;
    let n = d.len();
    let p = d.dim as f64 - alpha;
    let mut rules = Vec::with_capacity(n);
    for i in 0..n {
        let h = d.cell_radius[i];
        rules.push(match d.cell_shape[i] {
            CellShape::Ball => DiagonalRule::BallAverage { radius: h },
            CellShape::Band { length } => {
                if !(p < 2.0) {
                    return Err(Error::config(
                        "alpha",
                        format!("band cells need n - alpha < 2 (surfaces carry no energy otherwise), got {p}"),
                    ));
                }
                DiagonalRule::BandAverage { radius: h, length }
            }
        });
    }
    let exponent = alpha - d.dim as f64;
    let mut gram = DMatrix::<f64>::zeros(n, n);
    if n > 0 {
        gram.as_mut_slice().par_chunks_mut(n).enumerate().for_each(|(j, col)| {
            let xj = &d.points[j];
            for (i, v) in col.iter_mut().enumerate() {
                *v = if i == j {
                    match rules[j] {
                        DiagonalRule::BallAverage { radius } => ball_average(d.dim, alpha, radius),
                        DiagonalRule::BandAverage { radius, length } => band_average(radius, length, p),
                    }
                } else {
                    riesz_from_d2(dist2(&d.points[i], xj), exponent)
                };
            }
        });
    }
    Ok(KernelContext { dim: d.dim, alpha, gram, diagonal_rule: rules, points: d.points.clone() })
}

impl KernelContext {
    pub fn len(&self) -> usize {
        self.gram.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.gram[(i, i)]
    }

    /// `K[i, j]`, reading the contiguous column `i`.
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.gram[(j, i)]
    }

    pub(crate) fn column(&self, j: usize) -> &[f64] {
        let n = self.len();
        &self.gram.as_slice()[j * n..(j + 1) * n]
    }

    pub(crate) fn check_index(&self, i: usize) -> Result<()> {
        if i < self.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: i, len: self.len() })
        }
    }

    pub(crate) fn check_mask(&self, mask: &[usize]) -> Result<()> {
        mask.iter().try_for_each(|&i| self.check_index(i))
    }

    /// Principal submatrix on `mask` (in mask order).
    pub fn submatrix(&self, mask: &[usize]) -> DMatrix<f64> {
        let m = mask.len();
        let mut sub = DMatrix::<f64>::zeros(m, m);
        sub.as_mut_slice().par_chunks_mut(m.max(1)).enumerate().for_each(|(b, col)| {
            let src = self.column(mask[b]);
            for (a, v) in col.iter_mut().enumerate() {
                *v = src[mask[a]];
            }
        });
        sub
    }

    /// `K w` at the nodes `at`, summing only over the nonzero entries of `w`
    /// in ascending index order.
    pub fn apply_at(&self, w: &[f64], at: &[usize]) -> Vec<f64> {
        let nz: Vec<(usize, f64)> = w.iter().copied().enumerate().filter(|&(_, v)| v != 0.0).collect();
        at.par_iter()
            .map(|&i| {
                let col = self.column(i);
                nz.iter().map(|&(j, v)| col[j] * v).sum()
            })
            .collect()
    }

    /// Sum of `weight * K[i, j]` over point masses on nodes, for every `i` in `at`.
    pub fn potential(&self, mu: &DiscreteMeasure, at: &[usize]) -> Result<Vec<f64>> {
        self.check_mask(mu.support())?;
        self.check_mask(at)?;
        Ok(at
            .par_iter()
            .map(|&i| {
                let col = self.column(i);
                mu.iter().map(|(j, w)| col[j] * w).sum()
            })
            .collect())
    }

    /// Potential of `mu` at arbitrary points. Each node's contribution is
    /// capped at its own diagonal value `K_ii`, so points close to a node see
    /// the cell-regularized value rather than the point singularity.
    pub fn potential_at_points(&self, mu: &DiscreteMeasure, pts: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_mask(mu.support())?;
        let exponent = self.alpha - self.dim as f64;
        Ok(pts
            .par_iter()
            .map(|p| {
                mu.iter()
                    .map(|(j, w)| {
                        let d2 = dist2(p, &self.points[j]);
                        let k = if d2 == 0.0 { f64::INFINITY } else { riesz_from_d2(d2, exponent) };
                        w * k.min(self.diag(j))
                    })
                    .sum()
            })
            .collect())
    }

    /// Potential of a signed measure at `at`.
    pub fn signed_potential(&self, m: &SignedMeasure, at: &[usize]) -> Result<Vec<f64>> {
        let p = self.potential(&m.plus, at)?;
        let q = self.potential(&m.minus, at)?;
        Ok(p.iter().zip(&q).map(|(a, b)| a - b).collect())
    }

    pub fn inner_product(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
        let u = self.potential(nu, mu.support())?;
        Ok(mu.weights().iter().zip(&u).map(|(w, u)| w * u).sum())
    }

    pub fn energy(&self, mu: &DiscreteMeasure) -> Result<f64> {
        self.inner_product(mu, mu)
    }

    /// `I(plus - minus)`.
    pub fn signed_energy(&self, m: &SignedMeasure) -> Result<f64> {
        let w = m.to_dense(self.len());
        Ok(self.quadratic_form(&w))
    }

    /// `w^T K w` for a dense (possibly signed) weight vector.
    pub fn quadratic_form(&self, w: &[f64]) -> f64 {
        let nz: Vec<usize> = (0..w.len()).filter(|&i| w[i] != 0.0).collect();
        let kw = self.apply_at(w, &nz);
        nz.iter().zip(&kw).map(|(&i, v)| w[i] * v).sum()
    }

    /// Energy norm of the signed difference `mu - nu`.
    pub fn energy_distance(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
        self.check_mask(mu.support())?;
        self.check_mask(nu.support())?;
        let n = self.len();
        let a = mu.to_dense(n);
        let b = nu.to_dense(n);
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        Ok(self.quadratic_form(&diff).max(0.0).sqrt())
    }

    /// Writes `K` as CSV with a commented header (n, alpha, N, diagonal rules).
    pub fn write_gram_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# n={} alpha={} N={} diagonal_rule={}", self.dim, self.alpha, self.len(), self.rule_name())?;
        for i in 0..self.len() {
            let row: Vec<String> = self.column(i).iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Binary dump: magic `RQGRAM01`, u64 n, f64 alpha, u64 N, then N*N
    /// little-endian f64 in row-major order.
    pub fn write_gram_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"RQGRAM01")?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&self.alpha.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for i in 0..self.len() {
            for v in self.column(i) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    fn rule_name(&self) -> &'static str {
        let band = self.diagonal_rule.iter().any(|r| matches!(r, DiagonalRule::BandAverage { .. }));
        if band {
            "ball_average+band_average"
        } else {
            "ball_average"
        }
    }
}

/// Exact kernel sums from off-grid sources at each target; no regularization.
pub fn external_potential(dim: usize, alpha: f64, sources: &PointMasses, targets: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_alpha(dim, alpha)?;
    sources.validate(dim)?;
    let exponent = alpha - dim as f64;
    targets
        .par_iter()
        .map(|t| {
            let mut acc = 0.0;
            for (s, &w) in sources.points.iter().zip(&sources.weights) {
                let d2 = dist2(s, t);
                if d2 == 0.0 {
                    return Err(Error::Domain(format!("source {s:?} coincides with target {t:?}")));
                }
                acc += w * riesz_from_d2(d2, exponent);
            }
            Ok(acc)
        })
        .collect()
}

impl PointMasses {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Self {
        PointMasses { points, weights }
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.points.len() != self.weights.len() {
            return Err(Error::config("sources", "points and weights differ in length"));
        }
        if let Some(p) = self.points.iter().find(|p| p.len() != dim) {
            return Err(Error::config("sources", format!("source {p:?} does not have {dim} coordinates")));
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::config("sources", format!("weight {w} is not a finite nonnegative mass")));
        }
        Ok(())
    }

    /// Smallest distance from any source to any of `points`.
    pub fn distance_to(&self, points: &[Vec<f64>]) -> f64 {
        let mut best = f64::INFINITY;
        for s in &self.points {
            for p in points {
                best = best.min(dist2(s, p));
            }
        }
        best.sqrt()
    }
}

impl DiscreteMeasure {
    /// Validates nonnegative finite weights on distinct indices. Entries are
    /// kept in ascending index order.
    pub fn new(support: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if support.len() != weights.len() {
            return Err(Error::config("measure", "support and weights differ in length"));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::config("measure", format!("weight {w} is not a finite nonnegative mass")));
        }
        let mut pairs: Vec<(usize, f64)> = support.into_iter().zip(weights).collect();
        pairs.sort_by_key(|p| p.0);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::config("measure", "support indices must be distinct"));
        }
        let (support, weights): (Vec<usize>, Vec<f64>) = pairs.into_iter().unzip();
        let total_mass = weights.iter().sum();
        Ok(DiscreteMeasure { support, weights, total_mass })
    }

    pub fn zero() -> Self {
        DiscreteMeasure::default()
    }

    pub fn point(index: usize, mass: f64) -> Result<Self> {
        DiscreteMeasure::new(vec![index], vec![mass])
    }

    /// Keeps the strictly positive entries of a dense vector; negative
    /// entries (solver round-off) are dropped.
    pub fn from_dense(w: &[f64]) -> Self {
        let (support, weights): (Vec<usize>, Vec<f64>) =
            w.iter().copied().enumerate().filter(|&(_, v)| v > 0.0).unzip();
        let total_mass = weights.iter().sum();
        DiscreteMeasure { support, weights, total_mass }
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (i, w) in self.iter() {
            out[i] = w;
        }
        out
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn is_zero(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.support.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn weight_at(&self, i: usize) -> f64 {
        self.support.binary_search(&i).map(|k| self.weights[k]).unwrap_or(0.0)
    }

    pub fn scaled(&self, a: f64) -> Result<Self> {
        DiscreteMeasure::new(self.support.clone(), self.weights.iter().map(|w| a * w).collect())
    }

    /// `self + a * other` (both nonnegative, `a >= 0`).
    pub fn add_scaled(&self, other: &DiscreteMeasure, a: f64, n: usize) -> Result<Self> {
        let mut w = self.to_dense(n);
        for (i, v) in other.iter() {
            w[i] += a * v;
        }
        let support: NodeMask = (0..n).filter(|&i| w[i] != 0.0).collect();
        let weights = support.iter().map(|&i| w[i]).collect();
        DiscreteMeasure::new(support, weights)
    }
}

impl SignedMeasure {
    pub fn new(plus: DiscreteMeasure, minus: DiscreteMeasure) -> Result<Self> {
        if plus.support().iter().any(|i| minus.support().binary_search(i).is_ok()) {
            return Err(Error::config("signed measure", "positive and negative parts must have disjoint supports"));
        }
        Ok(SignedMeasure { plus, minus })
    }

    /// Jordan decomposition of a dense signed vector.
    pub fn from_dense(w: &[f64]) -> Self {
        let plus: Vec<f64> = w.iter().map(|v| v.max(0.0)).collect();
        let minus: Vec<f64> = w.iter().map(|v| (-v).max(0.0)).collect();
        SignedMeasure { plus: DiscreteMeasure::from_dense(&plus), minus: DiscreteMeasure::from_dense(&minus) }
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut w = self.plus.to_dense(n);
        for (i, v) in self.minus.iter() {
            w[i] -= v;
        }
        w
    }

    /// `|mu| = mu+ + mu-` total mass.
    pub fn total_variation(&self) -> f64 {
        self.plus.total_mass() + self.minus.total_mass()
    }

    pub fn is_zero(&self) -> bool {
        self.plus.is_zero() && self.minus.is_zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_points(h: f64) -> Discretization {
        let mut d = Discretization::from_points(3, vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]], "A").unwrap();
        d.cell_radius = vec![h, h];
        d
    }

    #[test]
    fn kernel_values() {
        let o = [0.0, 0.0, 0.0];
        assert_eq!(kernel_value(&o, &[1.0, 0.0, 0.0], 3, 2.0).unwrap(), 1.0);
        assert_eq!(kernel_value(&o, &[2.0, 0.0, 0.0], 3, 2.0).unwrap(), 0.5);
        assert_eq!(kernel_value(&o, &[0.0, 2.0, 0.0], 3, 1.0).unwrap(), 0.25);
        assert!(matches!(kernel_value(&o, &o, 3, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn gram_of_two_points() {
        let ctx = assemble_gram(&two_points(0.1), 2.0).unwrap();
        assert_eq!(ctx.entry(0, 1), 1.0);
        assert!((ctx.diag(0) - 15.0).abs() < 1e-12);
        assert_eq!(ctx.gram, ctx.gram.transpose());
    }

    #[test]
    fn single_point_gram() {
        let d = Discretization::from_points(3, vec![vec![0.0; 3]], "A").unwrap();
        let ctx = assemble_gram(&d, 1.5).unwrap();
        assert_eq!(ctx.len(), 1);
        assert!((ctx.diag(0) - 2.0 * d.cell_radius[0].powf(-1.5)).abs() < 1e-12);
    }

    #[test]
    fn collinear_offdiagonals() {
        let pts = vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]];
        let ctx = assemble_gram(&Discretization::from_points(3, pts, "A").unwrap(), 2.0).unwrap();
        assert_eq!((ctx.entry(0, 1), ctx.entry(1, 2), ctx.entry(0, 2)), (1.0, 1.0, 0.5));
    }

    #[test]
    fn alpha_out_of_range() {
        assert!(matches!(assemble_gram(&two_points(0.1), 3.0), Err(Error::Config { .. })));
        assert!(matches!(assemble_gram(&two_points(0.1), 0.0), Err(Error::Config { .. })));
    }

    #[test]
    fn potentials_and_energies() {
        let ctx = assemble_gram(&two_points(0.1), 2.0).unwrap();
        let unit = DiscreteMeasure::point(0, 1.0).unwrap();
        assert_eq!(ctx.potential(&unit, &[1]).unwrap(), vec![1.0]);
        assert_eq!(ctx.potential(&DiscreteMeasure::zero(), &[0, 1]).unwrap(), vec![0.0, 0.0]);
        let half = DiscreteMeasure::new(vec![0, 1], vec![0.5, 0.5]).unwrap();
        let u = ctx.potential(&half, &[0, 1]).unwrap();
        assert!((u[0] - 8.0).abs() < 1e-12 && (u[1] - 8.0).abs() < 1e-12);
        assert!((ctx.energy(&half).unwrap() - 8.0).abs() < 1e-12);
        assert_eq!(ctx.energy(&DiscreteMeasure::zero()).unwrap(), 0.0);
        assert_eq!(ctx.energy_distance(&half, &half).unwrap(), 0.0);
        assert!(ctx.potential(&unit, &[5]).is_err());
    }

    #[test]
    fn external_potentials() {
        let src = PointMasses::new(vec![vec![2.0, 0.0, 0.0]], vec![1.0]);
        let o = vec![vec![0.0; 3]];
        assert_eq!(external_potential(3, 2.0, &src, &o).unwrap(), vec![0.5]);
        let half = PointMasses::new(vec![vec![2.0, 0.0, 0.0]], vec![0.5]);
        assert_eq!(external_potential(3, 2.0, &half, &o).unwrap(), vec![0.25]);
        let two = PointMasses::new(vec![vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0]], vec![1.0, 1.0]);
        assert_eq!(external_potential(3, 2.0, &two, &o).unwrap(), vec![1.5]);
        let bad = PointMasses::new(vec![vec![0.0; 3]], vec![1.0]);
        assert!(matches!(external_potential(3, 2.0, &bad, &o), Err(Error::Domain(_))));
    }

    #[test]
    fn measure_validation() {
        assert!(DiscreteMeasure::new(vec![0, 0], vec![1.0, 1.0]).is_err());
        assert!(DiscreteMeasure::new(vec![0], vec![-1.0]).is_err());
        let m = DiscreteMeasure::new(vec![3, 1], vec![0.25, 0.5]).unwrap();
        assert_eq!(m.support(), &[1, 3]);
        assert_eq!(m.total_mass(), 0.75);
        let p = DiscreteMeasure::point(0, 1.0).unwrap();
        assert!(SignedMeasure::new(p.clone(), p).is_err());
    }
}
