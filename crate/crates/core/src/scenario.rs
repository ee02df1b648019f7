// SPDX-License-Identifier: Apache-2.0

//! Scenario files: one geometry, one kernel order, one field and a list of
//! tasks. A file holds either a single scenario (top-level keys) or several
//! under `[[scenarios]]`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::diagnostics::{check_frostman, check_representation, extract_support, SupportPrediction, SUPPORT_THRESHOLD};
use crate::error::{Error, Result};
use crate::experiments::{
    classify_thinness, probe_solvability, run_monotone_decreasing, run_monotone_increasing, write_json, SolvabilityVerdict,
    Verdict,
};
use crate::fields::{build_field, validate_admissibility, ChargeSpec, FieldSpec, FieldVector, SourceMeasure};
use crate::geometry::{discretize, monotone_family, Direction, Discretization, GeometrySpec, NodeMask};
use crate::kernel::{assemble_gram, DiscreteMeasure, KernelContext, PointMasses};
use crate::solvers::{solve_balayage, solve_capacitary, solve_gauss, SolveOptions};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    /// Include iteration logs in solve reports.
    #[serde(default)]
    pub log: bool,
}

/// Node subset; all nodes when every field is absent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSpec {
    #[serde(default)]
    pub tag: Option<String>,
    #[serde(default)]
    pub nodes: Option<Vec<usize>>,
    /// Keep nodes with `|x| <= max_radius`.
    #[serde(default)]
    pub max_radius: Option<f64>,
}

impl MaskSpec {
    pub fn resolve(&self, d: &Discretization) -> Result<NodeMask> {
        let mut m: NodeMask = match &self.nodes {
            Some(n) => {
                if let Some(&i) = n.iter().find(|&&i| i >= d.len()) {
                    return Err(Error::IndexOutOfRange { index: i, len: d.len() });
                }
                n.clone()
            }
            None => d.all_nodes(),
        };
        if let Some(t) = &self.tag {
            m.retain(|&i| d.region_tag[i] == *t);
        }
        if let Some(r) = self.max_radius {
            m.retain(|&i| d.norm(i) <= r);
        }
        m.sort_unstable();
        m.dedup();
        if m.is_empty() {
            return Err(Error::config("mask", "selects no node"));
        }
        Ok(m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    pub value: f64,
    pub rel_tol: f64,
}

impl Expect {
    fn holds(&self, x: f64) -> bool {
        (x - self.value).abs() <= self.rel_tol * self.value.abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionTag {
    FullA,
    BoundaryUnion,
    CompactCore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Task {
    SolveGauss {
        #[serde(default)]
        mask: MaskSpec,
        /// Compares `1 / w(A)` with the expected capacity.
        #[serde(default)]
        expect_capacity: Option<Expect>,
    },
    Capacitary {
        #[serde(default)]
        mask: MaskSpec,
        #[serde(default)]
        expect_capacity: Option<Expect>,
    },
    Balayage {
        #[serde(default)]
        mask: MaskSpec,
        /// Defaults to `delta_form` of the field.
        #[serde(default)]
        delta: Option<ChargeSpec>,
        #[serde(default)]
        expect_mass: Option<Expect>,
    },
    Frostman {
        #[serde(default)]
        mask: MaskSpec,
    },
    Representation {
        #[serde(default)]
        mask: MaskSpec,
        #[serde(default = "default_representation_bound")]
        bound: f64,
    },
    Support {
        #[serde(default)]
        mask: MaskSpec,
        prediction: PredictionTag,
        #[serde(default)]
        min_jaccard: Option<f64>,
        #[serde(default)]
        min_boundary_fraction: Option<f64>,
    },
    MonotoneIncreasing {
        count: usize,
    },
    MonotoneDecreasing {
        count: usize,
    },
    Thinness {
        #[serde(default)]
        q: Option<f64>,
        #[serde(default)]
        expect: Option<Verdict>,
        #[serde(default)]
        expect_capacity_growing: Option<bool>,
    },
    SolvabilityProbe {
        sweep: Vec<f64>,
        #[serde(default)]
        expect: Option<SolvabilityVerdict>,
    },
}

fn default_representation_bound() -> f64 {
    1e-6
}

impl Task {
    pub fn kind(&self) -> &'static str {
        match self {
            Task::SolveGauss { .. } => "solve_gauss",
            Task::Capacitary { .. } => "capacitary",
            Task::Balayage { .. } => "balayage",
            Task::Frostman { .. } => "frostman",
            Task::Representation { .. } => "representation",
            Task::Support { .. } => "support",
            Task::MonotoneIncreasing { .. } => "monotone_increasing",
            Task::MonotoneDecreasing { .. } => "monotone_decreasing",
            Task::Thinness { .. } => "thinness",
            Task::SolvabilityProbe { .. } => "solvability_probe",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub tags: Vec<String>,
    /// Assumptions the author vouches for but the discrete model cannot
    /// verify (e.g. "finite capacity"); copied into the summary.
    #[serde(default)]
    pub hypotheses: Vec<String>,
    pub geometry: GeometrySpec,
    pub alpha: f64,
    #[serde(default)]
    pub field: FieldSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Output directory (relative paths resolve against the working directory).
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Run even when the admissibility report fails.
    #[serde(default)]
    pub allow_warnings: bool,
    pub tasks: Vec<Task>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioList {
    scenarios: Vec<Scenario>,
}

/// Parses one or several scenarios from TOML text.
pub fn parse_scenarios(text: &str) -> Result<Vec<Scenario>> {
    let value: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    let list = if value.contains_key("scenarios") {
        toml::from_str::<ScenarioList>(text).map_err(|e| Error::Parse(e.to_string()))?.scenarios
    } else {
        vec![toml::from_str::<Scenario>(text).map_err(|e| Error::Parse(e.to_string()))?]
    };
    let mut seen = BTreeSet::new();
    for s in &list {
        s.validate()?;
        if !seen.insert(s.id.clone()) {
            return Err(Error::config("id", format!("duplicate scenario id `{}`", s.id)));
        }
    }
    Ok(list)
}

pub fn load_scenarios(path: &Path) -> Result<Vec<Scenario>> {
    parse_scenarios(&fs::read_to_string(path)?)
}

impl Scenario {
    fn validate(&self) -> Result<()> {
        if self.id.is_empty() || !self.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(Error::config("id", format!("`{}` must be nonempty [A-Za-z0-9_-]", self.id)));
        }
        if self.tasks.is_empty() {
            return Err(Error::config("tasks", "scenario has no task"));
        }
        let has_delta = self.field.delta_form.is_some();
        for t in &self.tasks {
            match t {
                Task::Balayage { delta: None, .. } if !has_delta => {
                    return Err(Error::config("tasks.balayage", "needs `delta` or a delta_form field"));
                }
                Task::SolvabilityProbe { .. } if !has_delta => {
                    return Err(Error::config("tasks.solvability_probe", "needs a delta_form field"));
                }
                Task::Representation { .. } if self.field.psi.len() + self.field.theta.iter().count() + self.field.omega.iter().count() > 0 => {
                    return Err(Error::config("tasks.representation", "needs a delta_form (or empty) field"));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunOverrides {
    pub tol: Option<f64>,
    pub emit_gram: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub index: usize,
    pub kind: String,
    pub passed: bool,
    pub converged: bool,
    pub result: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub id: String,
    pub passed: bool,
    pub nodes: usize,
    pub alpha: f64,
    pub tol: f64,
    pub hypotheses: Vec<String>,
    pub admissibility: Value,
    pub tasks: Vec<TaskOutcome>,
}

/// Everything the tasks share: nodes, Gram matrix and field.
struct Prepared {
    d: Discretization,
    ctx: KernelContext,
    f: FieldVector,
    delta: SourceMeasure,
}

fn charge_measure(c: &ChargeSpec, d: &Discretization) -> Result<SourceMeasure> {
    let mut dense = vec![0.0; d.len()];
    for nc in &c.nodes {
        if nc.node >= d.len() {
            return Err(Error::IndexOutOfRange { index: nc.node, len: d.len() });
        }
        if !(nc.weight >= 0.0) {
            return Err(Error::config("delta", "weights must be nonnegative"));
        }
        dense[nc.node] += nc.weight;
    }
    let (points, weights) = c.points.iter().map(|p| (p.point.clone(), p.weight)).unzip();
    let off = PointMasses::new(points, weights);
    off.validate(d.dim)?;
    Ok(SourceMeasure { on_grid: DiscreteMeasure::from_dense(&dense), off_grid: off })
}

fn check_value(x: f64, e: &Option<Expect>) -> (bool, Value) {
    match e {
        Some(e) => (e.holds(x), json!({ "expected": e.value, "rel_tol": e.rel_tol, "rel_error": (x - e.value).abs() / e.value.abs() })),
        None => (true, Value::Null),
    }
}

/// Runs every scenario's tasks and writes `<out>/<id>/summary.json` plus the
/// per-task reports. Returns the summaries in input order.
pub fn run_scenario(s: &Scenario, out_root: &Path, ov: &RunOverrides) -> Result<ScenarioSummary> {
    let opts = SolveOptions {
        tol: ov.tol.or(s.tolerances.tol).unwrap_or(1e-8),
        max_iter: s.tolerances.max_iter.unwrap_or(20_000),
        log: s.tolerances.log,
    };
    if !(opts.tol > 0.0 && opts.tol < 1.0) {
        return Err(Error::config("tolerances.tol", format!("must lie in (0, 1), got {}", opts.tol)));
    }
    let dir = out_root.join(&s.id);
    let d = discretize(&s.geometry)?;
    let adm = validate_admissibility(&s.field, &d);
    if !adm.passed && !s.allow_warnings {
        let why: Vec<String> = adm.checks.iter().filter(|c| !c.passed && !c.informational).map(|c| format!("{}: {}", c.name, c.detail)).collect();
        return Err(Error::config("field", format!("admissibility failed ({})", why.join("; "))));
    }
    let ctx = assemble_gram(&d, s.alpha)?;
    let f = build_field(&s.field, &d, &ctx)?;
    let delta = s.field.delta_measure(&d)?;
    fs::create_dir_all(&dir)?;
    if ov.emit_gram {
        ctx.write_gram_binary(fs::File::create(dir.join("gram.bin"))?)?;
        ctx.write_gram_csv(std::io::BufWriter::new(fs::File::create(dir.join("gram.csv"))?))?;
        d.write_csv(fs::File::create(dir.join("nodes.csv"))?)?;
        f.write_csv(fs::File::create(dir.join("field.csv"))?)?;
    }
    let p = Prepared { d, ctx, f, delta };
    let mut tasks = Vec::new();
    for (index, t) in s.tasks.iter().enumerate() {
        let stem = format!("task{index:02}_{}", t.kind());
        let (passed, converged, result) = run_task(s, t, &p, &opts, &dir, &stem)?;
        tasks.push(TaskOutcome { index, kind: t.kind().into(), passed, converged, result });
    }
    let summary = ScenarioSummary {
        id: s.id.clone(),
        passed: tasks.iter().all(|t| t.passed && t.converged),
        nodes: p.d.len(),
        alpha: s.alpha,
        tol: opts.tol,
        hypotheses: s.hypotheses.clone(),
        admissibility: serde_json::to_value(&adm)?,
        tasks,
    };
    write_json(&dir, "summary.json", &summary)?;
    Ok(summary)
}

fn run_task(s: &Scenario, t: &Task, p: &Prepared, opts: &SolveOptions, dir: &Path, stem: &str) -> Result<(bool, bool, Value)> {
    let (d, ctx, f) = (&p.d, &p.ctx, &p.f);
    let out = match t {
        Task::SolveGauss { mask, expect_capacity } => {
            let m = mask.resolve(d)?;
            let r = solve_gauss(ctx, &m, f, opts)?;
            let (ok, cmp) = check_value(1.0 / r.objective, expect_capacity);
            write_json(dir, &format!("{stem}.json"), &r.to_json(opts.log)?)?;
            let res = json!({
                "w": r.objective, "robin_constant": r.robin_constant, "inverse_w": 1.0 / r.objective,
                "support_size": r.minimizer.support().len(), "kkt": r.kkt, "iterations": r.iterations,
                "weights": if r.minimizer.support().len() <= 16 { json!(r.minimizer.iter().collect::<Vec<_>>()) } else { Value::Null },
                "expectation": cmp,
            });
            (ok, r.converged, res)
        }
        Task::Capacitary { mask, expect_capacity } => {
            let m = mask.resolve(d)?;
            let r = solve_capacitary(ctx, &m, opts)?;
            let cap = r.capacity.unwrap_or(0.0);
            let (ok, cmp) = check_value(cap, expect_capacity);
            let gap_ok = r.identity_gap.unwrap_or(0.0) <= 10.0 * r.tolerance_used;
            write_json(dir, &format!("{stem}.json"), &r.to_json(opts.log)?)?;
            let res = json!({ "capacity": cap, "energy": r.objective, "identity_gap": r.identity_gap, "kkt": r.kkt, "iterations": r.iterations, "expectation": cmp });
            (ok && gap_ok, r.converged, res)
        }
        Task::Balayage { mask, delta, expect_mass } => {
            let m = mask.resolve(d)?;
            let dm = match delta {
                Some(c) => charge_measure(c, d)?,
                None => p.delta.clone(),
            };
            let r = solve_balayage(ctx, &dm, &m, opts)?;
            let mass = r.minimizer.total_mass();
            let (ok, cmp) = check_value(mass, expect_mass);
            let bounded = mass <= dm.total_mass() + 10.0 * r.tolerance_used;
            // domination off the mask is only asserted for alpha <= 2
            let dominated = s.alpha > 2.0 || r.off_mask_excess.is_none_or(|e| e <= 10.0 * r.tolerance_used);
            write_json(dir, &format!("{stem}.json"), &r.to_json(opts.log)?)?;
            let res = json!({ "mass": mass, "mass_ratio": r.mass_ratio, "off_mask_excess": r.off_mask_excess, "distance": r.distance, "kkt": r.kkt, "iterations": r.iterations, "expectation": cmp });
            (ok && bounded && dominated, r.converged, res)
        }
        Task::Frostman { mask } => {
            let m = mask.resolve(d)?;
            let r = solve_gauss(ctx, &m, f, opts)?;
            let fr = check_frostman(ctx, &m, f, &r.minimizer, opts.tol, Some(r.objective))?;
            write_json(dir, &format!("{stem}.json"), &fr)?;
            (fr.passed, r.converged, serde_json::to_value(&fr)?)
        }
        Task::Representation { mask, bound } => {
            let m = mask.resolve(d)?;
            let g = solve_gauss(ctx, &m, f, opts)?;
            let rep = check_representation(ctx, &m, &p.delta, &g, opts)?;
            let res = json!({
                "balayage_mass": rep.balayage_mass, "capacity": rep.capacity, "eta": rep.eta,
                "robin_constant": rep.robin_constant, "relative_residual": rep.relative_residual,
                "constant_gap": rep.constant_gap, "bound": bound,
            });
            write_json(dir, &format!("{stem}.json"), &res)?;
            (rep.relative_residual <= *bound && rep.constant_gap <= *bound, rep.converged, res)
        }
        Task::Support { mask, prediction, min_jaccard, min_boundary_fraction } => {
            let m = mask.resolve(d)?;
            let g = solve_gauss(ctx, &m, f, opts)?;
            let pred = match prediction {
                PredictionTag::FullA => SupportPrediction::FullA { mask: m.clone() },
                PredictionTag::BoundaryUnion => SupportPrediction::BoundaryUnion { mask: m.clone() },
                PredictionTag::CompactCore => SupportPrediction::CompactCore,
            };
            let sr = extract_support(&g.minimizer, d, SUPPORT_THRESHOLD, &pred);
            let ok = min_jaccard.is_none_or(|j| sr.jaccard >= j) && min_boundary_fraction.is_none_or(|b| sr.boundary_fraction >= b);
            write_json(dir, &format!("{stem}.json"), &sr)?;
            let res = json!({
                "support_size": sr.support_nodes.len(), "predicted_size": sr.predicted_nodes.len(),
                "jaccard": sr.jaccard, "boundary_fraction": sr.boundary_fraction, "mass_radius": sr.mass_radius,
            });
            (ok, g.converged, res)
        }
        Task::MonotoneIncreasing { count } | Task::MonotoneDecreasing { count } => {
            let dir_kind = if matches!(t, Task::MonotoneIncreasing { .. }) { Direction::Increasing } else { Direction::Decreasing };
            let fam = monotone_family(&s.geometry, dir_kind, *count)?;
            let delta = (!p.delta.is_zero()).then_some(&p.delta);
            let trace = match dir_kind {
                Direction::Increasing => run_monotone_increasing(&fam, ctx, f, delta, opts),
                Direction::Decreasing => run_monotone_decreasing(&fam, ctx, f, delta, opts),
            };
            trace.write(dir, stem)?;
            let res = json!({ "labels": trace.labels, "w": trace.w_values, "c": trace.c_values, "energy_dists": trace.energy_dists, "checks": trace.checks, "complete": trace.complete });
            (trace.passed(), trace.converged.iter().all(|&c| c), res)
        }
        Task::Thinness { q, expect, expect_capacity_growing } => {
            let q = q.or(s.geometry.shell_base).unwrap_or(2.0);
            let r = classify_thinness(d, ctx, q, opts)?;
            r.write(dir, stem)?;
            let ok = expect.is_none_or(|v| v == r.verdict) && expect_capacity_growing.is_none_or(|g| g == r.capacity_growing());
            let res = json!({
                "verdict": r.verdict, "slopes": r.slopes, "partial_sums": r.partial_sums,
                "total_capacity": r.cumulative_capacities.last(), "capacity_increment_ratio": r.capacity_increment_ratio,
                "capacity_growing": r.capacity_growing(),
            });
            (ok, r.all_converged, res)
        }
        Task::SolvabilityProbe { sweep, expect } => {
            let tr = probe_solvability(&s.geometry, s.alpha, &p.delta, sweep, opts)?;
            tr.write(dir, stem)?;
            let ok = tr.passed() && expect.is_none_or(|v| v == tr.verdict);
            let res = json!({
                "verdict": tr.verdict, "balayage_mass": tr.balayage_mass, "extrapolated_mass": tr.extrapolated_mass,
                "robin_constants": tr.robin_constants, "tail_mass_fraction": tr.tail_mass_fraction,
                "mass_radius": tr.mass_radius, "radius_stable": tr.radius_stable, "tail_vanishing": tr.tail_vanishing,
                "c_plateau": tr.c_plateau, "c_to_zero": tr.c_to_zero, "checks": tr.checks,
            });
            (ok, tr.all_converged, res)
        }
    };
    Ok(out)
}

/// Runs every scenario and writes `<out>/certificate.json` with the
/// per-scenario pass flags.
pub fn run_all(scenarios: &[Scenario], default_out: &Path, ov: &RunOverrides) -> Result<Vec<ScenarioSummary>> {
    let mut out = Vec::new();
    for s in scenarios {
        let root = s.output_dir.clone().unwrap_or_else(|| default_out.to_path_buf());
        out.push(run_scenario(s, &root, ov)?);
    }
    let cert = json!({
        "passed": out.iter().all(|s| s.passed),
        "scenarios": out.iter().map(|s| json!({ "id": s.id, "passed": s.passed,
            "tasks": s.tasks.iter().map(|t| json!({ "kind": t.kind, "passed": t.passed && t.converged })).collect::<Vec<_>>() })).collect::<Vec<_>>(),
    });
    write_json(default_out, "certificate.json", &cert)?;
    Ok(out)
}

/// Scenario files shipped with the crate.
pub const BUILTIN_FILES: [(&str, &str); 6] = [
    ("sphere_capacity.toml", include_str!("../scenarios/sphere_capacity.toml")),
    ("balayage_mass.toml", include_str!("../scenarios/balayage_mass.toml")),
    ("representation.toml", include_str!("../scenarios/representation.toml")),
    ("rotation_bodies.toml", include_str!("../scenarios/rotation_bodies.toml")),
    ("monotone_families.toml", include_str!("../scenarios/monotone_families.toml")),
    ("solvability.toml", include_str!("../scenarios/solvability.toml")),
];

/// All built-in scenarios, in file order.
pub fn builtin_scenarios() -> Result<Vec<Scenario>> {
    let mut all = Vec::new();
    for (name, text) in BUILTIN_FILES {
        all.extend(parse_scenarios(text).map_err(|e| Error::Parse(format!("{name}: {e}")))?);
    }
    Ok(all)
}

/// Built-ins carrying `tag` (all of them when `tag` is `None`).
pub fn list_scenarios(tag: Option<&str>) -> Result<Vec<Scenario>> {
    Ok(builtin_scenarios()?.into_iter().filter(|s| tag.is_none_or(|t| s.tags.iter().any(|x| x == t))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse_with_unique_ids() {
        let all = builtin_scenarios().unwrap();
        assert!(all.len() >= 5);
        let ids: BTreeSet<&str> = all.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids.len(), all.len());
        assert_eq!(list_scenarios(Some("thinness")).unwrap().len(), 3);
        assert!(list_scenarios(Some("absent")).unwrap().is_empty());
    }

    #[test]
    fn single_and_list_forms() {
        let one = "id = \"a\"\nalpha = 2.0\ngeometry = { dim = 3, nodes = 4, shape = { kind = \"sphere\", radius = 1.0 } }\n[[tasks]]\nkind = \"capacitary\"\n";
        assert_eq!(parse_scenarios(one).unwrap().len(), 1);
        let many = "[[scenarios]]\nid = \"a\"\nalpha = 2.0\ngeometry = { dim = 3, nodes = 4, shape = { kind = \"sphere\", radius = 1.0 } }\n[[scenarios.tasks]]\nkind = \"capacitary\"\n";
        let dup = format!("{many}{}", many.replace("[[scenarios]]", "\n[[scenarios]]"));
        assert_eq!(parse_scenarios(many).unwrap().len(), 1);
        assert!(matches!(parse_scenarios(&dup), Err(Error::Config { .. })));
    }

    #[test]
    fn tasks_needing_delta_are_rejected_without_it() {
        let text = "id = \"a\"\nalpha = 2.0\ngeometry = { dim = 3, nodes = 4, shape = { kind = \"sphere\", radius = 1.0 } }\n[[tasks]]\nkind = \"balayage\"\n";
        assert!(matches!(parse_scenarios(text), Err(Error::Config { .. })));
        assert!(matches!(parse_scenarios("id = 3"), Err(Error::Parse(_))));
    }

    #[test]
    fn masks_filter_nodes() {
        let spec: GeometrySpec = toml::from_str("dim = 3\nnodes = 200\nshape = { kind = \"ball\", radius = 1.0 }").unwrap();
        let d = discretize(&spec).unwrap();
        let b = MaskSpec { tag: Some("boundary".into()), ..MaskSpec::default() }.resolve(&d).unwrap();
        assert!(!b.is_empty() && b.len() < d.len());
        let inner = MaskSpec { max_radius: Some(0.5), ..MaskSpec::default() }.resolve(&d).unwrap();
        assert!(inner.iter().all(|&i| d.norm(i) <= 0.5));
        assert!(MaskSpec { nodes: Some(vec![999]), ..MaskSpec::default() }.resolve(&d).is_err());
        assert!(MaskSpec { tag: Some("none".into()), ..MaskSpec::default() }.resolve(&d).is_err());
    }
}
