// SPDX-License-Identifier: Apache-2.0

//! Labelled point clouds standing in for the sets `A ⊂ R^n`.
//!
//! Every generator is deterministic: the same [`GeometrySpec`] always yields
//! bit-identical coordinates, so reports computed on top of a discretization
//! can be compared byte for byte.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BOUNDARY: &str = "boundary";
pub const INTERIOR: &str = "interior";

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

/// Node set as sorted, distinct node indices.
pub type NodeMask = Vec<usize>;

/// Shape of the cell that a node's unit mass is smeared over when the
/// self-interaction (diagonal of the Gram matrix) is computed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellShape {
    /// Solid ball of radius `cell_radius` centred at the node.
    Ball,
    /// Lateral surface of a cylinder of radius `cell_radius` and the given
    /// axial length, centred at the node (slender rotation bodies).
    Band { length: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Discretization {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub cell_radius: Vec<f64>,
    pub cell_shape: Vec<CellShape>,
    pub region_tag: Vec<String>,
    pub shell_index: Vec<Option<i64>>,
    pub truncation_radius: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `x1^-s`, `s >= 0`.
    Rho1,
    /// `exp(-x1^s)`, `0 < s <= 1`.
    Rho2,
    /// `exp(-x1^s)`, `s > 1`.
    Rho3,
}

impl Profile {
    pub fn radius(self, exponent: f64, x: f64) -> f64 {
        match self {
            Profile::Rho1 => {
                if exponent == 0.0 {
                    1.0
                } else {
                    x.powf(-exponent)
                }
            }
            Profile::Rho2 | Profile::Rho3 => (-x.powf(exponent)).exp(),
        }
    }

    fn check_exponent(self, s: f64) -> Result<()> {
        let ok = match self {
            Profile::Rho1 => s >= 0.0 && s.is_finite(),
            Profile::Rho2 => s > 0.0 && s <= 1.0,
            Profile::Rho3 => s > 1.0 && s.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            let range = match self {
                Profile::Rho1 => "[0, inf)",
                Profile::Rho2 => "(0, 1]",
                Profile::Rho3 => "(1, inf)",
            };
            Err(Error::config("shape.exponent", format!("{self:?} requires s in {range}, got {s}")))
        }
    }

    fn default_start(self) -> f64 {
        match self {
            Profile::Rho1 => 1.0,
            Profile::Rho2 | Profile::Rho3 => 0.0,
        }
    }
}

fn default_aspect() -> f64 {
    2.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Ball {
        #[serde(default)]
        center: Option<Vec<f64>>,
        radius: f64,
    },
    Sphere {
        #[serde(default)]
        center: Option<Vec<f64>>,
        radius: f64,
    },
    Annulus {
        #[serde(default)]
        center: Option<Vec<f64>>,
        inner_radius: f64,
        outer_radius: f64,
    },
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// Disc of the given radius in the hyperplane `x_n = center_n`.
    DiscInHyperplane {
        #[serde(default)]
        center: Option<Vec<f64>>,
        radius: f64,
    },
    /// `{0 <= x1 < inf, x2^2 + x3^2 <= rho(x1)^2}` truncated to `x1 <= R`,
    /// represented by a chain of band cells along the x1 axis.
    RotationBody {
        profile: Profile,
        exponent: f64,
        #[serde(default)]
        x_start: Option<f64>,
        /// Minimum ratio of axial cell length to band radius.
        #[serde(default = "default_aspect")]
        aspect: f64,
    },
    Union {
        parts: Vec<Shape>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub dim: usize,
    pub shape: Shape,
    /// Node budget N (an upper bound for rotation bodies).
    pub nodes: usize,
    #[serde(default)]
    pub truncation_radius: Option<f64>,
    /// Base q of the radial shells `q^k <= |x| < q^(k+1)`.
    #[serde(default)]
    pub shell_base: Option<f64>,
}

impl Discretization {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn all_nodes(&self) -> NodeMask {
        (0..self.len()).collect()
    }

    pub fn norm(&self, i: usize) -> f64 {
        norm(&self.points[i])
    }

    pub fn nodes_tagged(&self, tag: &str) -> NodeMask {
        (0..self.len()).filter(|&i| self.region_tag[i] == tag).collect()
    }

    /// Builds a discretization from raw points with default ball cells
    /// (half the nearest-neighbour distance) and every node tagged `tag`.
    pub fn from_points(dim: usize, points: Vec<Vec<f64>>, tag: &str) -> Result<Self> {
        if dim < 2 {
            return Err(Error::config("dim", "dimension must be at least 2"));
        }
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::config("points", format!("point {p:?} does not have {dim} coordinates")));
        }
        let n = points.len();
        let mut d = Discretization {
            dim,
            points,
            cell_radius: vec![0.0; n],
            cell_shape: vec![CellShape::Ball; n],
            region_tag: vec![tag.to_string(); n],
            shell_index: vec![None; n],
            truncation_radius: None,
        };
        d.reset_ball_radii();
        d.validate()?;
        Ok(d)
    }

    /// Distance from every node to its nearest neighbour (`inf` for a single node).
    pub fn nearest_neighbor_distances(&self) -> Vec<f64> {
        let n = self.len();
        let mut nn = vec![f64::INFINITY; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = dist(&self.points[i], &self.points[j]);
                if d < nn[i] {
                    nn[i] = d;
                }
                if d < nn[j] {
                    nn[j] = d;
                }
            }
        }
        nn
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        self.nearest_neighbor_distances().into_iter().fold(f64::INFINITY, f64::min)
    }

    fn reset_ball_radii(&mut self) {
        let nn = self.nearest_neighbor_distances();
        for i in 0..self.len() {
            if self.cell_shape[i] == CellShape::Ball {
                // a lone node has no neighbour; give it a unit cell
                self.cell_radius[i] = if nn[i].is_finite() { 0.5 * nn[i] } else { 1.0 };
            }
        }
    }

    /// Checks the structural invariants: distinct points, positive cell
    /// radii not exceeding the nearest-neighbour distance, one tag per node.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.cell_radius.len() != n
            || self.cell_shape.len() != n
            || self.region_tag.len() != n
            || self.shell_index.len() != n
        {
            return Err(Error::config("discretization", "per-node arrays differ in length"));
        }
        let nn = self.nearest_neighbor_distances();
        for i in 0..n {
            if !(nn[i] > 0.0) {
                return Err(Error::config("points", format!("node {i} coincides with another node")));
            }
            let h = self.cell_radius[i];
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::config("cell_radius", format!("node {i} has non-positive radius {h}")));
            }
            if nn[i].is_finite() && h > nn[i] * (1.0 + 1e-12) {
                return Err(Error::config(
                    "cell_radius",
                    format!("node {i}: radius {h} exceeds nearest-neighbour distance {}", nn[i]),
                ));
            }
            if self.region_tag[i].is_empty() {
                return Err(Error::config("region_tag", format!("node {i} has an empty tag")));
            }
        }
        Ok(())
    }

    /// Assigns `shell_index` from the shells of base `q`.
    pub fn assign_shells(&mut self, q: f64) -> Result<()> {
        let shells = shell_decompose(self, q)?;
        for (k, nodes) in shells {
            for i in nodes {
                self.shell_index[i] = Some(k);
            }
        }
        Ok(())
    }

    /// One row per node: coordinates, cell data, tag and shell index.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.dim).map(|k| format!("x{k}")).collect();
        header.extend(["cell_radius", "cell_shape", "cell_length", "region_tag", "shell_index"].map(String::from));
        out.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.points[i].iter().map(|v| format!("{v:e}")).collect();
            row.push(format!("{:e}", self.cell_radius[i]));
            match self.cell_shape[i] {
                CellShape::Ball => {
                    row.push("ball".into());
                    row.push(String::new());
                }
                CellShape::Band { length } => {
                    row.push("band".into());
                    row.push(format!("{length:e}"));
                }
            }
            row.push(self.region_tag[i].clone());
            row.push(self.shell_index[i].map(|k| k.to_string()).unwrap_or_default());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dist2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub(crate) fn dist(x: &[f64], y: &[f64]) -> f64 {
    dist2(x, y).sqrt()
}

fn resolve_center(center: &Option<Vec<f64>>, dim: usize) -> Result<Vec<f64>> {
    match center {
        None => Ok(vec![0.0; dim]),
        Some(c) if c.len() == dim => Ok(c.clone()),
        Some(c) => Err(Error::config("shape.center", format!("expected {dim} coordinates, got {}", c.len()))),
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive and finite, got {v}")))
    }
}

/// Rakhmanov–Saff–Zhou generalized spiral on the unit 2-sphere; includes both poles.
fn spiral_sphere(k: usize, offset: f64) -> Vec<[f64; 3]> {
    match k {
        0 => vec![],
        1 => vec![[0.0, 0.0, 1.0]],
        _ => {
            let mut out = Vec::with_capacity(k);
            let mut phi = offset;
            for i in 0..k {
                let z = -1.0 + 2.0 * i as f64 / (k - 1) as f64;
                let r = (1.0 - z * z).max(0.0).sqrt();
                if i == 0 || i == k - 1 {
                    phi = offset;
                } else {
                    phi += 3.6 / ((k as f64) * (1.0 - z * z)).sqrt();
                    phi %= 2.0 * PI;
                }
                out.push([r * phi.cos(), r * phi.sin(), z]);
            }
            out
        }
    }
}

fn circle(k: usize, offset: f64) -> Vec<[f64; 2]> {
    (0..k)
        .map(|i| {
            let t = offset + 2.0 * PI * i as f64 / k as f64;
            [t.cos(), t.sin()]
        })
        .collect()
}

/// Points on the (dim-1)-sphere of radius `r` about `c`.
fn round_layer(dim: usize, k: usize, r: f64, c: &[f64], offset: f64) -> Vec<Vec<f64>> {
    match dim {
        2 => circle(k, offset).into_iter().map(|p| vec![c[0] + r * p[0], c[1] + r * p[1]]).collect(),
        _ => spiral_sphere(k, offset)
            .into_iter()
            .map(|p| vec![c[0] + r * p[0], c[1] + r * p[1], c[2] + r * p[2]])
            .collect(),
    }
}

/// Splits `total` over weights by largest remainder, every entry at least 1.
fn allocate(total: usize, weights: &[f64]) -> Vec<usize> {
    let m = weights.len();
    if m == 0 {
        return vec![];
    }
    let base = total.saturating_sub(m);
    let sum: f64 = weights.iter().sum();
    let raw: Vec<f64> = weights.iter().map(|w| base as f64 * w / sum).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize + 1).collect();
    let mut left = total.saturating_sub(counts.iter().sum::<usize>());
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

struct Raw {
    points: Vec<Vec<f64>>,
    tags: Vec<&'static str>,
    cells: Vec<CellShape>,
    radii: Vec<Option<f64>>,
}

impl Raw {
    fn new() -> Self {
        Raw { points: vec![], tags: vec![], cells: vec![], radii: vec![] }
    }

    fn push_ball(&mut self, p: Vec<f64>, tag: &'static str) {
        self.points.push(p);
        self.tags.push(tag);
        self.cells.push(CellShape::Ball);
        self.radii.push(None);
    }
}

fn round_dim(dim: usize, what: &str) -> Result<()> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(Error::config("dim", format!("{what} is generated for n = 2 or 3, got {dim}")))
    }
}

fn gen_sphere(dim: usize, n: usize, c: &[f64], radius: f64) -> Result<Raw> {
    round_dim(dim, "sphere")?;
    positive("shape.radius", radius)?;
    let mut raw = Raw::new();
    for p in round_layer(dim, n, radius, c, 0.0) {
        raw.push_ball(p, BOUNDARY);
    }
    Ok(raw)
}

fn layer_weight(dim: usize, r: f64) -> f64 {
    r.powi(dim as i32 - 1)
}

fn gen_ball(dim: usize, n: usize, c: &[f64], radius: f64) -> Result<Raw> {
    round_dim(dim, "ball")?;
    positive("shape.radius", radius)?;
    let layers = match dim {
        2 => (n as f64 / PI).sqrt(),
        _ => (n as f64 / (4.0 * PI / 3.0)).cbrt(),
    }
    .round()
    .max(1.0) as usize;
    let radii: Vec<f64> = (1..=layers).map(|l| radius * l as f64 / layers as f64).collect();
    let weights: Vec<f64> = radii.iter().map(|&r| layer_weight(dim, r)).collect();
    let counts = allocate(n - 1, &weights);
    let mut raw = Raw::new();
    raw.push_ball(c.to_vec(), INTERIOR);
    for (l, (&r, &k)) in radii.iter().zip(&counts).enumerate() {
        let tag = if l + 1 == layers { BOUNDARY } else { INTERIOR };
        for p in round_layer(dim, k, r, c, l as f64 * GOLDEN_ANGLE) {
            raw.push_ball(p, tag);
        }
    }
    Ok(raw)
}

fn gen_annulus(dim: usize, n: usize, c: &[f64], r_in: f64, r_out: f64) -> Result<Raw> {
    round_dim(dim, "annulus")?;
    positive("shape.inner_radius", r_in)?;
    if !(r_out > r_in && r_out.is_finite()) {
        return Err(Error::config("shape.outer_radius", "must exceed inner_radius"));
    }
    let volume = match dim {
        2 => PI * (r_out * r_out - r_in * r_in),
        _ => 4.0 / 3.0 * PI * (r_out.powi(3) - r_in.powi(3)),
    };
    let spacing = (volume / n as f64).powf(1.0 / dim as f64);
    let layers = (((r_out - r_in) / spacing).round() as usize + 1).clamp(2, n);
    let radii: Vec<f64> =
        (0..layers).map(|l| r_in + (r_out - r_in) * l as f64 / (layers - 1) as f64).collect();
    let weights: Vec<f64> = radii.iter().map(|&r| layer_weight(dim, r)).collect();
    let counts = allocate(n, &weights);
    let mut raw = Raw::new();
    for (l, (&r, &k)) in radii.iter().zip(&counts).enumerate() {
        let tag = if l == 0 || l + 1 == layers { BOUNDARY } else { INTERIOR };
        for p in round_layer(dim, k, r, c, l as f64 * GOLDEN_ANGLE) {
            raw.push_ball(p, tag);
        }
    }
    Ok(raw)
}

fn gen_box(dim: usize, n: usize, lower: &[f64], upper: &[f64]) -> Result<Raw> {
    if lower.len() != dim || upper.len() != dim {
        return Err(Error::config("shape.lower", format!("box corners need {dim} coordinates")));
    }
    if lower.iter().zip(upper).any(|(a, b)| !(b > a)) {
        return Err(Error::config("shape.upper", "every upper coordinate must exceed the lower one"));
    }
    let mut m = 2usize;
    while (m + 1).checked_pow(dim as u32).is_some_and(|v| v <= n) {
        m += 1;
    }
    if m.pow(dim as u32) > n {
        return Err(Error::config("nodes", format!("a {dim}-box needs at least {} nodes", 2usize.pow(dim as u32))));
    }
    let total = m.pow(dim as u32);
    let mut raw = Raw::new();
    for flat in 0..total {
        let mut rem = flat;
        let mut p = vec![0.0; dim];
        let mut on_face = false;
        for k in 0..dim {
            let idx = rem % m;
            rem /= m;
            on_face |= idx == 0 || idx == m - 1;
            p[k] = lower[k] + (upper[k] - lower[k]) * idx as f64 / (m - 1) as f64;
        }
        raw.push_ball(p, if on_face { BOUNDARY } else { INTERIOR });
    }
    Ok(raw)
}

fn gen_disc(dim: usize, n: usize, c: &[f64], radius: f64) -> Result<Raw> {
    positive("shape.radius", radius)?;
    let mut raw = Raw::new();
    match dim {
        2 => {
            for i in 0..n {
                let t = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
                let tag = if i == 0 || i + 1 == n { BOUNDARY } else { INTERIOR };
                raw.push_ball(vec![c[0] + radius * t, c[1]], tag);
            }
        }
        3 => {
            let ring = ((2.0 * (PI * n as f64).sqrt()).round() as usize).clamp(2, n);
            let inner = n - ring;
            let spacing = 2.0 * PI * radius / ring as f64;
            for p in circle(ring, 0.0) {
                raw.push_ball(vec![c[0] + radius * p[0], c[1] + radius * p[1], c[2]], BOUNDARY);
            }
            let r_in = (radius - 0.5 * spacing).max(0.5 * radius);
            for i in 0..inner {
                let r = r_in * ((i as f64 + 0.5) / inner as f64).sqrt();
                let t = i as f64 * GOLDEN_ANGLE;
                raw.push_ball(vec![c[0] + r * t.cos(), c[1] + r * t.sin(), c[2]], INTERIOR);
            }
        }
        _ => return Err(Error::config("dim", format!("disc_in_hyperplane is generated for n = 2 or 3, got {dim}"))),
    }
    Ok(raw)
}

/// Cell breakpoints of the axis chain for a given minimum cell length.
/// Stops early once more than `cap` cells would be produced.
fn chain_breaks(profile: Profile, s: f64, aspect: f64, x0: f64, r: f64, min_len: f64, cap: usize) -> Vec<f64> {
    let mut breaks = vec![x0];
    let mut x = x0;
    while x < r {
        let len = (aspect * profile.radius(s, x)).max(min_len);
        let next = x + len;
        if next >= r {
            // a short trailing piece is absorbed by the previous cell
            if r - x < 0.5 * len && breaks.len() > 1 {
                *breaks.last_mut().unwrap() = r;
            } else {
                breaks.push(r);
            }
            break;
        }
        breaks.push(next);
        x = next;
        if breaks.len() > cap + 1 {
            break;
        }
    }
    breaks
}

fn gen_rotation_body(
    dim: usize,
    n: usize,
    profile: Profile,
    s: f64,
    x_start: Option<f64>,
    aspect: f64,
    truncation: Option<f64>,
) -> Result<Raw> {
    if dim != 3 {
        return Err(Error::config("dim", "rotation bodies live in R^3"));
    }
    profile.check_exponent(s)?;
    if !(aspect >= 2.0 && aspect.is_finite()) {
        return Err(Error::config("shape.aspect", format!("must be at least 2, got {aspect}")));
    }
    let r = truncation.ok_or_else(|| Error::config("truncation_radius", "required for rotation bodies"))?;
    let x0 = x_start.unwrap_or(profile.default_start());
    if !(x0 >= 0.0) || (profile == Profile::Rho1 && s > 0.0 && x0 <= 0.0) {
        return Err(Error::config("shape.x_start", format!("profile radius is unbounded at x1 = {x0}")));
    }
    if !(r > x0 && r.is_finite()) {
        return Err(Error::config("truncation_radius", format!("must exceed x_start = {x0}")));
    }
    if !(profile.radius(s, r) > 0.0) {
        return Err(Error::config(
            "truncation_radius",
            format!("profile radius underflows at x1 = {r}; use a smaller truncation"),
        ));
    }
    // largest minimum cell length whose chain still fits the node budget
    let count = |m: f64| chain_breaks(profile, s, aspect, x0, r, m, n).len() - 1;
    let (mut lo, mut hi) = ((r - x0) / (n as f64 * 1e3), r - x0);
    if count(lo) <= n {
        hi = lo;
    } else {
        for _ in 0..100 {
            let mid = (lo * hi).sqrt();
            if count(mid) > n {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let breaks = chain_breaks(profile, s, aspect, x0, r, hi, n);
    if breaks.len() < 3 {
        return Err(Error::config("nodes", "rotation body chain has fewer than 2 cells"));
    }
    let mut raw = Raw::new();
    for w in breaks.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        raw.points.push(vec![mid, 0.0, 0.0]);
        raw.tags.push(BOUNDARY);
        raw.cells.push(CellShape::Band { length: w[1] - w[0] });
        raw.radii.push(Some(profile.radius(s, mid)));
    }
    Ok(raw)
}

fn gen_shape(dim: usize, n: usize, shape: &Shape, truncation: Option<f64>) -> Result<Raw> {
    match shape {
        Shape::Sphere { center, radius } => gen_sphere(dim, n, &resolve_center(center, dim)?, *radius),
        Shape::Ball { center, radius } => gen_ball(dim, n, &resolve_center(center, dim)?, *radius),
        Shape::Annulus { center, inner_radius, outer_radius } => {
            gen_annulus(dim, n, &resolve_center(center, dim)?, *inner_radius, *outer_radius)
        }
        Shape::Box { lower, upper } => gen_box(dim, n, lower, upper),
        Shape::DiscInHyperplane { center, radius } => gen_disc(dim, n, &resolve_center(center, dim)?, *radius),
        Shape::RotationBody { profile, exponent, x_start, aspect } => {
            gen_rotation_body(dim, n, *profile, *exponent, *x_start, *aspect, truncation)
        }
        Shape::Union { parts } => {
            if parts.is_empty() {
                return Err(Error::config("shape.parts", "union needs at least one part"));
            }
            let per = n / parts.len();
            if per < 2 {
                return Err(Error::config("nodes", "node budget too small for the union parts"));
            }
            let mut raw = Raw::new();
            for part in parts {
                let sub = gen_shape(dim, per, part, truncation)?;
                for i in 0..sub.points.len() {
                    let dup = raw.points.iter().any(|q| dist(q, &sub.points[i]) < 1e-12);
                    if !dup {
                        raw.points.push(sub.points[i].clone());
                        raw.tags.push(sub.tags[i]);
                        raw.cells.push(sub.cells[i]);
                        raw.radii.push(sub.radii[i]);
                    }
                }
            }
            Ok(raw)
        }
    }
}

/// Generates the labelled node set for `spec`.
pub fn discretize(spec: &GeometrySpec) -> Result<Discretization> {
    if spec.dim < 2 {
        return Err(Error::config("dim", format!("must be at least 2, got {}", spec.dim)));
    }
    if spec.nodes < 2 {
        return Err(Error::config("nodes", format!("need N >= 2, got {}", spec.nodes)));
    }
    if let Some(r) = spec.truncation_radius {
        positive("truncation_radius", r)?;
    }
    let shell_base = match (&spec.shape, spec.shell_base) {
        (_, Some(q)) => Some(q),
        (Shape::RotationBody { .. }, None) => Some(2.0),
        _ => None,
    };
    let raw = gen_shape(spec.dim, spec.nodes, &spec.shape, spec.truncation_radius)?;
    let n = raw.points.len();
    let mut d = Discretization {
        dim: spec.dim,
        points: raw.points,
        cell_radius: raw.radii.iter().map(|r| r.unwrap_or(0.0)).collect(),
        cell_shape: raw.cells,
        region_tag: raw.tags.iter().map(|t| t.to_string()).collect(),
        shell_index: vec![None; n],
        truncation_radius: spec.truncation_radius,
    };
    d.reset_ball_radii();
    if let Some(q) = shell_base {
        d.assign_shells(q)?;
    }
    d.validate()?;
    Ok(d)
}

/// Shell index `k` with `q^k <= |x| < q^(k+1)`, or -1 when `|x| < 1`.
pub fn shell_of(x_norm: f64, q: f64) -> i64 {
    if x_norm < 1.0 {
        return -1;
    }
    let mut k = (x_norm.ln() / q.ln()).floor() as i64;
    while q.powi(k as i32) > x_norm {
        k -= 1;
    }
    while q.powi(k as i32 + 1) <= x_norm {
        k += 1;
    }
    k
}

/// Radial shells `Q_k` of base `q`; nodes with `|x| < 1` land in shell -1.
pub fn shell_decompose(d: &Discretization, q: f64) -> Result<BTreeMap<i64, Vec<usize>>> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::config("shell_base", format!("q must exceed 1, got {q}")));
    }
    let mut shells: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for i in 0..d.len() {
        shells.entry(shell_of(d.norm(i), q)).or_default().push(i);
    }
    Ok(shells)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// Nested node masks over one shared discretization.
#[derive(Clone, Debug, Serialize)]
pub struct MonotoneFamily {
    #[serde(skip)]
    pub master: Discretization,
    pub direction: Direction,
    /// Cutoff that generated each member (radius or truncation).
    pub labels: Vec<f64>,
    pub masks: Vec<NodeMask>,
}

fn shape_center(shape: &Shape, dim: usize) -> Result<Vec<f64>> {
    match shape {
        Shape::Ball { center, .. }
        | Shape::Sphere { center, .. }
        | Shape::Annulus { center, .. }
        | Shape::DiscInHyperplane { center, .. } => resolve_center(center, dim),
        Shape::Box { lower, upper } => Ok(lower.iter().zip(upper).map(|(a, b)| 0.5 * (a + b)).collect()),
        Shape::RotationBody { .. } | Shape::Union { .. } => Ok(vec![0.0; dim]),
    }
}

/// Coordinate used for radial cutoffs of `spec`: `x1` for rotation bodies,
/// the distance to the shape centre otherwise.
pub fn radial_coordinates(spec: &GeometrySpec, d: &Discretization) -> Result<Vec<f64>> {
    let center = shape_center(&spec.shape, spec.dim)?;
    Ok(match spec.shape {
        Shape::RotationBody { .. } => d.points.iter().map(|p| p[0]).collect(),
        _ => d.points.iter().map(|p| dist(p, &center)).collect(),
    })
}

/// Nested subsets of one discretization of `spec`.
///
/// Increasing families grow a cutoff (radius about the shape centre, or the
/// truncation `x1 <= R q^(j-count)` for rotation bodies) until the last member
/// is the full node set. Decreasing families remove an inner core of growing
/// radius, so the first member is the full node set.
pub fn monotone_family(spec: &GeometrySpec, direction: Direction, count: usize) -> Result<MonotoneFamily> {
    if count < 2 {
        return Err(Error::config("count", format!("a family needs at least 2 members, got {count}")));
    }
    let master = discretize(spec)?;
    let radial = radial_coordinates(spec, &master)?;
    let r_max = radial.iter().cloned().fold(0.0, f64::max);
    let r_min = radial.iter().cloned().fold(f64::INFINITY, f64::min);
    let slack = 1e-9 * r_max.max(1.0);
    let mut labels = Vec::with_capacity(count);
    let mut masks = Vec::with_capacity(count);
    for j in 1..=count {
        let (label, mask): (f64, NodeMask) = match (direction, &spec.shape) {
            (Direction::Increasing, Shape::RotationBody { .. }) => {
                let cut = r_max * 2f64.powi(j as i32 - count as i32);
                (cut, (0..master.len()).filter(|&i| radial[i] <= cut + slack).collect())
            }
            (Direction::Increasing, _) => {
                let cut = r_max * j as f64 / count as f64;
                (cut, (0..master.len()).filter(|&i| radial[i] <= cut + slack).collect())
            }
            (Direction::Decreasing, _) => {
                let cut = r_min + (r_max - r_min) * (j - 1) as f64 / (2 * count) as f64;
                (cut, (0..master.len()).filter(|&i| radial[i] >= cut - slack).collect())
            }
        };
        if mask.is_empty() {
            return Err(Error::config("count", format!("family member {j} (cutoff {label}) contains no node")));
        }
        labels.push(label);
        masks.push(mask);
    }
    Ok(MonotoneFamily { master, direction, labels, masks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(dim: usize, shape: Shape, nodes: usize) -> GeometrySpec {
        GeometrySpec { dim, shape, nodes, truncation_radius: None, shell_base: None }
    }

    #[test]
    fn two_node_sphere_is_antipodal() {
        let d = discretize(&spec(3, Shape::Sphere { center: None, radius: 1.0 }, 2)).unwrap();
        assert_eq!(d.len(), 2);
        let s: Vec<f64> = (0..3).map(|k| d.points[0][k] + d.points[1][k]).collect();
        assert!(norm(&s) < 1e-15);
        assert!(d.cell_radius.iter().all(|&h| h <= 1.0));
        assert!(d.region_tag.iter().all(|t| t == BOUNDARY));
    }

    #[test]
    fn single_node_ball_is_rejected() {
        let err = discretize(&spec(3, Shape::Ball { center: None, radius: 1.0 }, 1)).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "nodes"));
    }

    #[test]
    fn ball_has_interior_and_boundary() {
        let d = discretize(&spec(3, Shape::Ball { center: None, radius: 1.0 }, 500)).unwrap();
        assert_eq!(d.len(), 500);
        let b = d.nodes_tagged(BOUNDARY);
        assert!(!b.is_empty() && b.len() < 500);
        for &i in &b {
            assert!((d.norm(i) - 1.0).abs() < 1e-12);
        }
        assert!(d.points.iter().all(|p| norm(p) <= 1.0 + 1e-12));
    }

    #[test]
    fn annulus_and_box_and_disc_validate() {
        let a = discretize(&spec(3, Shape::Annulus { center: None, inner_radius: 1.0, outer_radius: 2.0 }, 400))
            .unwrap();
        assert_eq!(a.len(), 400);
        assert!(a.points.iter().all(|p| (1.0 - 1e-12..=2.0 + 1e-12).contains(&norm(p))));
        let b = discretize(&spec(2, Shape::Box { lower: vec![0.0, 0.0], upper: vec![1.0, 2.0] }, 30)).unwrap();
        assert_eq!(b.len(), 25);
        assert_eq!(b.nodes_tagged(BOUNDARY).len(), 16);
        let c = discretize(&spec(3, Shape::DiscInHyperplane { center: None, radius: 1.0 }, 300)).unwrap();
        assert!(c.points.iter().all(|p| p[2] == 0.0));
    }

    #[test]
    fn bad_profile_exponent_names_field() {
        let mut s = spec(3, Shape::RotationBody { profile: Profile::Rho2, exponent: 1.5, x_start: None, aspect: 2.0 }, 100);
        s.truncation_radius = Some(8.0);
        match discretize(&s).unwrap_err() {
            Error::Config { field, .. } => assert_eq!(field, "shape.exponent"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn shells_of_two_points() {
        let d = Discretization::from_points(3, vec![vec![1.5, 0.0, 0.0], vec![3.0, 0.0, 0.0]], "A").unwrap();
        let shells = shell_decompose(&d, 2.0).unwrap();
        assert_eq!(shells.len(), 2);
        assert_eq!(shells[&0], vec![0]);
        assert_eq!(shells[&1], vec![1]);
        assert!(shell_decompose(&d, 1.0).is_err());
    }

    #[test]
    fn empty_point_set_has_no_shells() {
        let d = Discretization {
            dim: 3,
            points: vec![],
            cell_radius: vec![],
            cell_shape: vec![],
            region_tag: vec![],
            shell_index: vec![],
            truncation_radius: None,
        };
        assert!(shell_decompose(&d, 2.0).unwrap().is_empty());
    }

    #[test]
    fn shell_boundaries_are_exact() {
        assert_eq!(shell_of(1.0, 2.0), 0);
        assert_eq!(shell_of(2.0, 2.0), 1);
        assert_eq!(shell_of(1.999_999, 2.0), 0);
        assert_eq!(shell_of(0.5, 2.0), -1);
        assert_eq!(shell_of(27.0, 3.0), 3);
    }

    #[test]
    fn allocate_respects_total() {
        let c = allocate(17, &[1.0, 4.0, 9.0]);
        assert_eq!(c.iter().sum::<usize>(), 17);
        assert!(c.iter().all(|&k| k >= 1));
    }

    #[test]
    fn ball_family_nests() {
        let fam = monotone_family(&spec(3, Shape::Ball { center: None, radius: 1.0 }, 300), Direction::Increasing, 3)
            .unwrap();
        assert_eq!(fam.masks.len(), 3);
        for w in fam.masks.windows(2) {
            assert!(w[0].iter().all(|i| w[1].contains(i)));
        }
        assert_eq!(fam.masks[2].len(), 300);
        assert!((fam.labels[0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn annulus_decreasing_family_nests() {
        let fam = monotone_family(
            &spec(3, Shape::Annulus { center: None, inner_radius: 1.0, outer_radius: 2.0 }, 400),
            Direction::Decreasing,
            2,
        )
        .unwrap();
        assert_eq!(fam.masks[0].len(), 400);
        assert!(fam.masks[1].len() < 400);
        assert!(fam.masks[1].iter().all(|i| fam.masks[0].contains(i)));
    }
}
