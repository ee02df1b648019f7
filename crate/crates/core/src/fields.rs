// SPDX-License-Identifier: Apache-2.0

//! External fields sampled at the nodes of a discretization.
//!
//! Two mutually exclusive forms are supported:
//!
//! * `f = psi + U^theta + U^omega` with `psi` from a small catalog of
//!   closed-form functions, `theta` a signed charge anywhere and `omega` a
//!   signed charge strictly away from the nodes;
//! * `f = -U^delta` with `delta = tau + sigma`, `tau` anywhere (including on
//!   nodes) and `sigma` strictly away from the nodes.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Discretization, NodeMask};
use crate::kernel::{external_potential, DiscreteMeasure, KernelContext, PointMasses};

/// Where a catalog term of `psi` applies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    /// Nodes carrying this region tag.
    Tag { tag: String },
    /// Closed ball `|x - center| <= radius`.
    Ball { center: Vec<f64>, radius: f64 },
}

impl Region {
    fn contains(&self, d: &Discretization, i: usize) -> bool {
        match self {
            Region::Tag { tag } => d.region_tag[i] == *tag,
            Region::Ball { center, radius } => {
                let r2: f64 = d.points[i].iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                r2 <= radius * radius
            }
        }
    }
}

/// One closed-form term of `psi`; the terms of a spec are summed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PsiTerm {
    Constant { value: f64 },
    /// `coef * |x|^exponent`.
    Power { coef: f64, exponent: f64 },
    /// `value` on the region, 0 elsewhere.
    RegionConstant { region: Region, value: f64 },
    /// `+inf` off the region, 0 on it.
    InfiniteOutside { region: Region },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeCharge {
    pub node: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointCharge {
    pub point: Vec<f64>,
    pub weight: f64,
}

/// Charges on nodes and at free positions. Weights may be negative for the
/// signed parts `theta`, `omega`; they must be nonnegative for `tau`, `sigma`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargeSpec {
    #[serde(default)]
    pub nodes: Vec<NodeCharge>,
    #[serde(default)]
    pub points: Vec<PointCharge>,
}

impl ChargeSpec {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.points.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.nodes.iter().map(|c| c.weight).sum::<f64>() + self.points.iter().map(|c| c.weight).sum::<f64>()
    }

    fn check(&self, field: &str, d: &Discretization, signed: bool) -> Result<()> {
        for c in &self.nodes {
            if c.node >= d.len() {
                return Err(Error::IndexOutOfRange { index: c.node, len: d.len() });
            }
        }
        for c in &self.points {
            if c.point.len() != d.dim {
                return Err(Error::config(field, format!("point {:?} does not have {} coordinates", c.point, d.dim)));
            }
        }
        let weights = self.nodes.iter().map(|c| c.weight).chain(self.points.iter().map(|c| c.weight));
        for w in weights {
            if !w.is_finite() || (!signed && w < 0.0) {
                return Err(Error::config(field, format!("weight {w} is not admissible")));
            }
        }
        Ok(())
    }

    fn free_part(&self, sign: f64) -> PointMasses {
        let (points, weights) =
            self.points.iter().filter(|c| c.weight * sign > 0.0).map(|c| (c.point.clone(), c.weight.abs())).unzip();
        PointMasses::new(points, weights)
    }

    /// Potential at every node: exact sums for free charges, Gram columns for
    /// node charges.
    fn potential(&self, ctx: &KernelContext, field: &str) -> Result<Vec<f64>> {
        let n = ctx.len();
        let mut dense = vec![0.0; n];
        for c in &self.nodes {
            dense[c.node] += c.weight;
        }
        let all: NodeMask = (0..n).collect();
        let mut u = ctx.apply_at(&dense, &all);
        for sign in [1.0, -1.0] {
            let pm = self.free_part(sign);
            if pm.is_empty() {
                continue;
            }
            let v = external_potential(ctx.dim, ctx.alpha, &pm, &ctx.points).map_err(|e| match e {
                Error::Domain(m) => Error::config(field, format!("a free charge sits on a node: {m}")),
                e => e,
            })?;
            u.iter_mut().zip(&v).for_each(|(a, b)| *a += sign * b);
        }
        Ok(u)
    }

    fn free_distance(&self, d: &Discretization) -> f64 {
        let pts: Vec<Vec<f64>> = self.points.iter().map(|c| c.point.clone()).collect();
        PointMasses::new(pts, vec![]).distance_to(&d.points)
    }
}

/// A nonnegative charge split into node weights and free point masses.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SourceMeasure {
    pub on_grid: DiscreteMeasure,
    pub off_grid: PointMasses,
}

impl SourceMeasure {
    pub fn total_mass(&self) -> f64 {
        self.on_grid.total_mass() + self.off_grid.total_mass()
    }

    pub fn is_zero(&self) -> bool {
        self.on_grid.is_zero() && self.off_grid.is_empty()
    }

    /// `U^delta` at every node of `ctx`.
    pub fn potential_at_nodes(&self, ctx: &KernelContext) -> Result<Vec<f64>> {
        let all: NodeMask = (0..ctx.len()).collect();
        let mut u = ctx.potential(&self.on_grid, &all)?;
        if !self.off_grid.is_empty() {
            let v = external_potential(ctx.dim, ctx.alpha, &self.off_grid, &ctx.points)?;
            u.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
        }
        Ok(u)
    }
}

impl From<DiscreteMeasure> for SourceMeasure {
    fn from(m: DiscreteMeasure) -> Self {
        SourceMeasure { on_grid: m, off_grid: PointMasses::default() }
    }
}

impl From<PointMasses> for SourceMeasure {
    fn from(p: PointMasses) -> Self {
        SourceMeasure { on_grid: DiscreteMeasure::zero(), off_grid: p }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaForm {
    #[serde(default)]
    pub tau: ChargeSpec,
    /// Must stay at positive distance from every node.
    #[serde(default)]
    pub sigma: ChargeSpec,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    #[serde(default)]
    pub psi: Vec<PsiTerm>,
    #[serde(default)]
    pub theta: Option<ChargeSpec>,
    /// Free charges only; `nodes` must be empty.
    #[serde(default)]
    pub omega: Option<ChargeSpec>,
    #[serde(default)]
    pub delta_form: Option<DeltaForm>,
}

impl FieldSpec {
    pub fn is_delta_form(&self) -> bool {
        self.delta_form.is_some()
    }

    fn has_f1_parts(&self) -> bool {
        !self.psi.is_empty() || self.theta.is_some() || self.omega.is_some()
    }

    /// `delta = tau + sigma` as a source measure (zero outside delta form).
    pub fn delta_measure(&self, d: &Discretization) -> Result<SourceMeasure> {
        let Some(df) = &self.delta_form else {
            return Ok(SourceMeasure::default());
        };
        df.tau.check("delta_form.tau", d, false)?;
        df.sigma.check("delta_form.sigma", d, false)?;
        let mut dense = vec![0.0; d.len()];
        for c in df.tau.nodes.iter().chain(&df.sigma.nodes) {
            dense[c.node] += c.weight;
        }
        let mut off = df.tau.free_part(1.0);
        let s = df.sigma.free_part(1.0);
        off.points.extend(s.points);
        off.weights.extend(s.weights);
        Ok(SourceMeasure { on_grid: DiscreteMeasure::from_dense(&dense), off_grid: off })
    }
}

/// Which part of the field a column of the provenance record holds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub psi: Option<Vec<f64>>,
    pub theta: Option<Vec<f64>>,
    pub omega: Option<Vec<f64>>,
    /// `-U^delta`.
    pub delta: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldVector {
    /// `f` at every node; `+inf` only where `psi` is.
    pub values: Vec<f64>,
    pub provenance: Provenance,
    /// `delta(R^n)` in delta form.
    pub attractive_mass: Option<f64>,
}

impl FieldVector {
    pub fn zero(n: usize) -> Self {
        FieldVector { values: vec![0.0; n], ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Nodes of `mask` where `f < +inf`.
    pub fn finite_nodes(&self, mask: &[usize]) -> NodeMask {
        mask.iter().copied().filter(|&i| self.values[i].is_finite()).collect()
    }

    /// CSV with columns `node,total,psi,theta,omega,delta` (absent parts empty).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["node", "total", "psi", "theta", "omega", "delta"])?;
        let col = |p: &Option<Vec<f64>>, i: usize| p.as_ref().map(|v| v[i].to_string()).unwrap_or_default();
        let p = &self.provenance;
        for i in 0..self.values.len() {
            out.write_record([
                i.to_string(),
                self.values[i].to_string(),
                col(&p.psi, i),
                col(&p.theta, i),
                col(&p.omega, i),
                col(&p.delta, i),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn sample_psi(terms: &[PsiTerm], d: &Discretization) -> Result<Vec<f64>> {
    let mut out = vec![0.0; d.len()];
    for t in terms {
        for (i, v) in out.iter_mut().enumerate() {
            let add = match t {
                PsiTerm::Constant { value } => *value,
                PsiTerm::Power { coef, exponent } => {
                    let r = d.norm(i);
                    if r == 0.0 && *exponent < 0.0 {
                        if *coef > 0.0 {
                            f64::INFINITY
                        } else if *coef == 0.0 {
                            0.0
                        } else {
                            return Err(Error::config("psi", "coef * |x|^p is -inf at the origin"));
                        }
                    } else if r == 0.0 && *exponent == 0.0 {
                        *coef
                    } else {
                        coef * r.powf(*exponent)
                    }
                }
                PsiTerm::RegionConstant { region, value } => {
                    if region.contains(d, i) {
                        *value
                    } else {
                        0.0
                    }
                }
                PsiTerm::InfiniteOutside { region } => {
                    if region.contains(d, i) {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                }
            };
            if add.is_nan() || add == f64::NEG_INFINITY {
                return Err(Error::config("psi", format!("term {t:?} is not > -inf at node {i}")));
            }
            *v += add;
        }
    }
    Ok(out)
}

fn check_spec(spec: &FieldSpec, d: &Discretization) -> Result<()> {
    if spec.is_delta_form() && spec.has_f1_parts() {
        return Err(Error::config("field", "delta_form excludes psi, theta and omega"));
    }
    for t in &spec.psi {
        let finite = match t {
            PsiTerm::Constant { value } | PsiTerm::RegionConstant { value, .. } => value.is_finite(),
            PsiTerm::Power { coef, exponent } => coef.is_finite() && exponent.is_finite(),
            PsiTerm::InfiniteOutside { .. } => true,
        };
        if !finite {
            return Err(Error::config("psi", format!("parameters of {t:?} must be finite")));
        }
    }
    if let Some(th) = &spec.theta {
        th.check("theta", d, true)?;
    }
    if let Some(om) = &spec.omega {
        om.check("omega", d, true)?;
        if !om.nodes.is_empty() {
            return Err(Error::config("omega", "sources of omega must lie off A (free points only)"));
        }
        let dist = om.free_distance(d);
        if !om.points.is_empty() && dist.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::config("omega", "d(S_omega, A) must be positive"));
        }
    }
    if let Some(df) = &spec.delta_form {
        df.tau.check("delta_form.tau", d, false)?;
        df.sigma.check("delta_form.sigma", d, false)?;
        if !df.sigma.nodes.is_empty() {
            return Err(Error::config("delta_form.sigma", "sigma must lie off A; put node charges in tau"));
        }
        if !df.sigma.points.is_empty() && df.sigma.free_distance(d).partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::config("delta_form.sigma", "d(S_sigma, A) must be positive"));
        }
    }
    Ok(())
}

/// Samples `f` at every node of `d` (which `ctx` was assembled on).
pub fn build_field(spec: &FieldSpec, d: &Discretization, ctx: &KernelContext) -> Result<FieldVector> {
    if ctx.len() != d.len() {
        return Err(Error::config("field", "kernel context and discretization differ in size"));
    }
    check_spec(spec, d)?;
    let n = d.len();
    let mut fv = FieldVector::zero(n);
    if let Some(df) = &spec.delta_form {
        let delta = spec.delta_measure(d)?;
        let u = delta.potential_at_nodes(ctx).map_err(|e| match e {
            Error::Domain(m) => Error::config("delta_form.tau", format!("a free charge sits on a node: {m}")),
            e => e,
        })?;
        let part: Vec<f64> = u.iter().map(|v| -v).collect();
        fv.values.clone_from(&part);
        fv.provenance.delta = Some(part);
        fv.attractive_mass = Some(df.tau.total_mass() + df.sigma.total_mass());
        return Ok(fv);
    }
    if !spec.psi.is_empty() {
        let p = sample_psi(&spec.psi, d)?;
        fv.values.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
        fv.provenance.psi = Some(p);
    }
    if let Some(th) = &spec.theta {
        let u = th.potential(ctx, "theta")?;
        fv.values.iter_mut().zip(&u).for_each(|(a, b)| *a += b);
        fv.provenance.theta = Some(u);
    }
    if let Some(om) = &spec.omega {
        let u = om.potential(ctx, "omega")?;
        fv.values.iter_mut().zip(&u).for_each(|(a, b)| *a += b);
        fv.provenance.omega = Some(u);
    }
    Ok(fv)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// Informational checks never fail the report.
    pub informational: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub passed: bool,
    pub finite_nodes: usize,
    /// Smallest distance from free omega/sigma sources to the nodes.
    pub source_distance: Option<f64>,
    pub checks: Vec<AdmissibilityCheck>,
}

/// Report-only check of the standing assumptions on the field.
pub fn validate_admissibility(spec: &FieldSpec, d: &Discretization) -> AdmissibilityReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String, informational: bool| {
        checks.push(AdmissibilityCheck { name: name.into(), passed, detail, informational });
    };

    let exclusive = !(spec.is_delta_form() && spec.has_f1_parts());
    push("canonical_form", exclusive, if exclusive { "ok".into() } else { "delta_form mixed with psi/theta/omega".into() }, false);

    let psi = sample_psi(&spec.psi, d);
    let finite_nodes = match &psi {
        Ok(p) => p.iter().filter(|v| v.is_finite()).count(),
        Err(_) => 0,
    };
    match &psi {
        Ok(_) if finite_nodes > 0 => push("finiteness_set", true, format!("{finite_nodes} of {} nodes have finite psi", d.len()), false),
        Ok(_) => push("finiteness_set", false, "finiteness set empty".into(), false),
        Err(e) => push("finiteness_set", false, e.to_string(), false),
    }

    let mut free: Vec<(&str, &ChargeSpec)> = Vec::new();
    if let Some(om) = &spec.omega {
        free.push(("omega", om));
    }
    if let Some(df) = &spec.delta_form {
        free.push(("sigma", &df.sigma));
    }
    let mut source_distance: Option<f64> = None;
    for (name, c) in free {
        if !c.nodes.is_empty() {
            push("source_distance", false, format!("{name} has charges on nodes; d(S_{name}, A) > 0 is required"), false);
        }
        if !c.points.is_empty() {
            let dist = c.free_distance(d);
            let detail = if dist > 0.0 {
                format!("d(S_{name}, A) = {dist}")
            } else {
                format!("d(S_{name}, A) = {dist}; must be > 0")
            };
            push("source_distance", dist > 0.0, detail, false);
            source_distance = Some(source_distance.map_or(dist, |s| s.min(dist)));
        }
    }

    let measures = [spec.theta.as_ref(), spec.omega.as_ref()]
        .into_iter()
        .flatten()
        .chain(spec.delta_form.iter().flat_map(|df| [&df.tau, &df.sigma]))
        .map(|c| c.nodes.iter().map(|x| x.weight.abs()).sum::<f64>() + c.points.iter().map(|x| x.weight.abs()).sum::<f64>())
        .sum::<f64>()
        + 0.0;
    push(
        "tail_integrability",
        measures.is_finite(),
        format!("finite total variation {measures}; the tail integral is bounded by it"),
        true,
    );

    if d.truncation_radius.is_some() && !spec.psi.is_empty() {
        let ok = matches!(&psi, Ok(p) if p.iter().all(|&v| v >= 0.0));
        push("psi_nonnegative", ok, "psi >= 0 on a truncated unbounded set".into(), true);
    }

    let passed = checks.iter().all(|c| c.passed || c.informational);
    AdmissibilityReport { passed, finite_nodes, source_distance, checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::assemble_gram;

    fn single_origin() -> (Discretization, KernelContext) {
        let d = Discretization::from_points(3, vec![vec![0.0, 0.0, 0.0]], "boundary").unwrap();
        let ctx = assemble_gram(&d, 2.0).unwrap();
        (d, ctx)
    }

    fn point(p: [f64; 3], w: f64) -> PointCharge {
        PointCharge { point: p.to_vec(), weight: w }
    }

    #[test]
    fn negative_omega_at_distance_two() {
        let (d, ctx) = single_origin();
        let spec = FieldSpec {
            omega: Some(ChargeSpec { nodes: vec![], points: vec![point([2.0, 0.0, 0.0], -1.0)] }),
            ..Default::default()
        };
        let f = build_field(&spec, &d, &ctx).unwrap();
        assert!((f.values[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn delta_form_point_mass() {
        let (d, ctx) = single_origin();
        let spec = FieldSpec {
            delta_form: Some(DeltaForm { tau: ChargeSpec::default(), sigma: ChargeSpec { nodes: vec![], points: vec![point([2.0, 0.0, 0.0], 1.0)] } }),
            ..Default::default()
        };
        let f = build_field(&spec, &d, &ctx).unwrap();
        assert!((f.values[0] + 0.5).abs() < 1e-15);
        assert_eq!(f.attractive_mass, Some(1.0));
    }

    #[test]
    fn squared_norm_field() {
        let pts = vec![vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![1.0, 1.0, 1.0]];
        let d = Discretization::from_points(3, pts, "boundary").unwrap();
        let ctx = assemble_gram(&d, 2.0).unwrap();
        let spec = FieldSpec { psi: vec![PsiTerm::Power { coef: 1.0, exponent: 2.0 }], ..Default::default() };
        let f = build_field(&spec, &d, &ctx).unwrap();
        for (a, b) in f.values.iter().zip([1.0, 4.0, 3.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn mixing_forms_is_rejected() {
        let (d, ctx) = single_origin();
        let spec = FieldSpec {
            psi: vec![PsiTerm::Constant { value: 1.0 }],
            delta_form: Some(DeltaForm::default()),
            ..Default::default()
        };
        assert!(matches!(build_field(&spec, &d, &ctx), Err(Error::Config { .. })));
    }

    #[test]
    fn omega_on_a_node_is_rejected() {
        let (d, ctx) = single_origin();
        let spec = FieldSpec { omega: Some(ChargeSpec { nodes: vec![], points: vec![point([0.0; 3], 1.0)] }), ..Default::default() };
        let err = build_field(&spec, &d, &ctx).unwrap_err();
        assert!(err.to_string().contains("omega"));
    }

    #[test]
    fn theta_is_linear() {
        let pts = vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]];
        let d = Discretization::from_points(3, pts, "boundary").unwrap();
        let ctx = assemble_gram(&d, 1.5).unwrap();
        let mk = |s: f64| FieldSpec {
            theta: Some(ChargeSpec {
                nodes: vec![NodeCharge { node: 1, weight: 0.3 * s }],
                points: vec![point([0.0, 3.0, 0.0], -0.7 * s)],
            }),
            ..Default::default()
        };
        let a = build_field(&mk(1.0), &d, &ctx).unwrap();
        let b = build_field(&mk(2.0), &d, &ctx).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((2.0 * x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn admissibility_reports() {
        let (d, _) = single_origin();
        let outside = FieldSpec {
            psi: vec![PsiTerm::InfiniteOutside { region: Region::Tag { tag: "nowhere".into() } }],
            ..Default::default()
        };
        let r = validate_admissibility(&outside, &d);
        assert!(!r.passed);
        assert!(r.checks.iter().any(|c| c.detail == "finiteness set empty"));

        let near = FieldSpec { omega: Some(ChargeSpec { nodes: vec![], points: vec![point([0.3, 0.0, 0.0], 1.0)] }), ..Default::default() };
        let r = validate_admissibility(&near, &d);
        assert!(r.passed);
        assert!((r.source_distance.unwrap() - 0.3).abs() < 1e-15);

        assert!(validate_admissibility(&FieldSpec::default(), &d).passed);
    }

    #[test]
    fn field_csv_has_part_columns() {
        let (d, ctx) = single_origin();
        let spec = FieldSpec { psi: vec![PsiTerm::Constant { value: 2.0 }], ..Default::default() };
        let f = build_field(&spec, &d, &ctx).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().nth(1).unwrap(), "0,2,2,,,");
    }
}
