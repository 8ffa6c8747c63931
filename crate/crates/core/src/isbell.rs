//! Isbell's injective hull of a finite metric space.
//!
//! `Δ(X)` is the set of `f` with `f(x) + f(y) ≥ d(x, y)`, the star transform is
//! `f*(x) = max_y (d(x, y) − f(y))`, and `f` is extremal when `f ∈ Δ(X)` and
//! `f* = f`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linf::{linf_dist, LinfPoint};
use crate::retraction::InjectiveSystem;
use crate::DEFAULT_GEOM_TOL;

/// A triangle `d(x, z) > d(x, y) + d(y, z)` with its excess.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TriangleViolation {
    pub x: usize,
    pub y: usize,
    pub z: usize,
    pub excess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub n: usize,
    /// Structural defects other than the triangle inequality.
    pub defects: Vec<String>,
    /// Largest `d(x, z) − d(x, y) − d(y, z)` seen, if positive.
    pub worst_triangle: Option<TriangleViolation>,
    pub triangle_violations: usize,
}

impl MetricReport {
    pub fn is_metric(&self) -> bool {
        self.defects.is_empty() && self.triangle_violations == 0
    }
}

/// Checks shape, finiteness, symmetry, diagonal, positivity and the triangle
/// inequality, each up to `tau`.
pub fn validate_metric(dist: &[Vec<f64>], tau: f64) -> MetricReport {
    let n = dist.len();
    let mut defects = Vec::new();
    if n == 0 {
        defects.push("metric space has no points".to_string());
    }
    for (i, row) in dist.iter().enumerate() {
        if row.len() != n {
            defects.push(format!("row {i} has {} entries, expected {n}", row.len()));
        }
    }
    if !defects.is_empty() {
        return MetricReport { n, defects, worst_triangle: None, triangle_violations: 0 };
    }
    for i in 0..n {
        for j in 0..n {
            let d = dist[i][j];
            if !d.is_finite() {
                defects.push(format!("dist[{i}][{j}] is not finite"));
            } else if d < 0.0 {
                defects.push(format!("dist[{i}][{j}] = {d} is negative"));
            } else if i == j && d > tau {
                defects.push(format!("dist[{i}][{i}] = {d} is not zero"));
            } else if i != j && d <= 0.0 {
                defects.push(format!("distinct points {i} and {j} are at distance 0"));
            }
            if j > i && (dist[i][j] - dist[j][i]).abs() > tau {
                defects.push(format!("dist[{i}][{j}] = {} but dist[{j}][{i}] = {}", dist[i][j], dist[j][i]));
            }
        }
    }
    if !defects.is_empty() {
        return MetricReport { n, defects, worst_triangle: None, triangle_violations: 0 };
    }
    let mut worst: Option<TriangleViolation> = None;
    let mut count = 0;
    for x in 0..n {
        for z in 0..n {
            for y in 0..n {
                let excess = dist[x][z] - dist[x][y] - dist[y][z];
                if excess > tau {
                    count += 1;
                }
                if excess > 0.0 && worst.is_none_or(|w| excess > w.excess) {
                    worst = Some(TriangleViolation { x, y, z, excess });
                }
            }
        }
    }
    MetricReport { n, defects, worst_triangle: worst, triangle_violations: count }
}

#[derive(Serialize, Deserialize)]
struct MetricRecord {
    n: usize,
    dist: Vec<Vec<f64>>,
}

/// A finite metric space given by its distance matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MetricRecord", into = "MetricRecord")]
pub struct FiniteMetricSpace {
    dist: Vec<Vec<f64>>,
    geom_tol: f64,
}

impl TryFrom<MetricRecord> for FiniteMetricSpace {
    type Error = Error;

    fn try_from(r: MetricRecord) -> Result<Self> {
        if r.n != r.dist.len() {
            return Err(Error::InvalidMetric(format!("n = {} but dist has {} rows", r.n, r.dist.len())));
        }
        FiniteMetricSpace::new(r.dist, DEFAULT_GEOM_TOL)
    }
}

impl From<FiniteMetricSpace> for MetricRecord {
    fn from(m: FiniteMetricSpace) -> Self {
        MetricRecord { n: m.dist.len(), dist: m.dist }
    }
}

impl FiniteMetricSpace {
    pub fn new(dist: Vec<Vec<f64>>, geom_tol: f64) -> Result<Self> {
        let report = validate_metric(&dist, geom_tol);
        if let Some(d) = report.defects.first() {
            return Err(Error::InvalidMetric(d.clone()));
        }
        if report.triangle_violations > 0 {
            let w = report.worst_triangle.expect("violations imply a worst triple");
            return Err(Error::InvalidMetric(format!(
                "triangle inequality fails at ({}, {}, {}) by {:e}",
                w.x, w.y, w.z, w.excess
            )));
        }
        Ok(Self { dist, geom_tol })
    }

    /// The induced max-norm metric on distinct points.
    pub fn from_points(points: &[LinfPoint], geom_tol: f64) -> Result<Self> {
        let mut dist = vec![vec![0.0; points.len()]; points.len()];
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                let d = linf_dist(&points[i], &points[j])?;
                dist[i][j] = d;
                dist[j][i] = d;
            }
        }
        Self::new(dist, geom_tol)
    }

    pub fn n_points(&self) -> usize {
        self.dist.len()
    }

    pub fn dist(&self, x: usize, y: usize) -> f64 {
        self.dist[x][y]
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.dist
    }

    pub fn geom_tol(&self) -> f64 {
        self.geom_tol
    }

    pub fn with_geom_tol(mut self, geom_tol: f64) -> Self {
        self.geom_tol = geom_tol;
        self
    }

    /// The distance function `d_x`.
    pub fn distance_function(&self, x: usize) -> Result<HullFunction> {
        if x >= self.n_points() {
            return Err(Error::IndexOutOfRange { index: x, len: self.n_points() });
        }
        Ok(HullFunction { values: self.dist[x].clone() })
    }

    fn check(&self, f: &HullFunction) -> Result<()> {
        if f.values.len() != self.n_points() {
            return Err(Error::DimensionMismatch { expected: self.n_points(), found: f.values.len() });
        }
        Ok(())
    }
}

/// A real function on the points of a [`FiniteMetricSpace`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct HullFunction {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for HullFunction {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        HullFunction::new(v)
    }
}

impl From<HullFunction> for Vec<f64> {
    fn from(f: HullFunction) -> Self {
        f.values
    }
}

impl HullFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("hull function"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `‖f − g‖∞`.
    pub fn sup_dist(&self, other: &HullFunction) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: other.len() });
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeltaReport {
    pub member: bool,
    /// The pair minimizing `f(x) + f(y) − d(x, y)`, with that value.
    pub worst_pair: (usize, usize),
    pub worst_slack: f64,
}

/// Membership of `f` in `Δ(X)` up to the space's tolerance.
pub fn in_delta(m: &FiniteMetricSpace, f: &HullFunction) -> Result<DeltaReport> {
    m.check(f)?;
    let v = &f.values;
    let mut worst = ((0, 0), f64::INFINITY);
    for x in 0..v.len() {
        for y in x..v.len() {
            let s = v[x] + v[y] - m.dist[x][y];
            if s < worst.1 {
                worst = ((x, y), s);
            }
        }
    }
    Ok(DeltaReport { member: worst.1 >= -m.geom_tol, worst_pair: worst.0, worst_slack: worst.1 })
}

/// `x ↦ max_y (d(x, y) − f(y))`.
pub fn star(m: &FiniteMetricSpace, f: &HullFunction) -> Result<HullFunction> {
    m.check(f)?;
    Ok(HullFunction { values: star_raw(m, &f.values) })
}

fn star_raw(m: &FiniteMetricSpace, v: &[f64]) -> Vec<f64> {
    m.dist
        .iter()
        .map(|row| row.iter().zip(v).map(|(d, fy)| d - fy).fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExtremalityReport {
    pub extremal: bool,
    pub in_delta: bool,
    /// `‖f* − f‖∞`.
    pub star_residual: f64,
    /// `max_x min_y (f(x) + f(y) − d(x, y))`: the smallest `ε` for which every
    /// `x` has a partner `y` with `f(x) + f(y) ≤ d(x, y) + ε`.
    pub pairing_residual: f64,
}

/// Extremality test, computed both through the star transform and through
/// the pairing condition; the two residuals agree on `Δ(X)`.
pub fn is_extremal(m: &FiniteMetricSpace, f: &HullFunction, tol: f64) -> Result<ExtremalityReport> {
    let delta = in_delta(m, f)?;
    let s = star_raw(m, &f.values);
    let star_residual = s.iter().zip(&f.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let v = &f.values;
    let pairing_residual = (0..v.len())
        .map(|x| (0..v.len()).map(|y| v[x] + v[y] - m.dist[x][y]).fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max);
    if delta.member {
        let scale = 1.0 + v.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        debug_assert!(
            (star_residual - pairing_residual.max(0.0)).abs() <= m.geom_tol + 1e-12 * scale,
            "extremality residuals disagree: {star_residual} vs {pairing_residual}"
        );
    }
    let extremal = delta.member && star_residual <= tol && pairing_residual <= tol;
    Ok(ExtremalityReport { extremal, in_delta: delta.member, star_residual, pairing_residual })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Extremalized {
    pub function: HullFunction,
    pub iterations: usize,
    /// `‖g* − g‖∞` before each averaging step, ending with the accepted one.
    pub residuals: Vec<f64>,
}

/// Averaged star iteration `g ← (g + g*)/2` until `‖g* − g‖∞ ≤ tol`.
///
/// Starting in `Δ(X)` the iterates stay in `Δ(X)` and decrease pointwise.
pub fn extremalize(m: &FiniteMetricSpace, f: &HullFunction, tol: f64, max_iter: usize) -> Result<Extremalized> {
    let d = in_delta(m, f)?;
    if !d.member {
        return Err(Error::invalid(format!(
            "function is not in Delta(X): pair {:?} has slack {:e}",
            d.worst_pair, d.worst_slack
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol must be positive"));
    }
    let mut g = f.values.clone();
    let mut residuals = Vec::new();
    for it in 0..=max_iter {
        let s = star_raw(m, &g);
        let r = s.iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        residuals.push(r);
        if r <= tol {
            return Ok(Extremalized { function: HullFunction { values: g }, iterations: it, residuals });
        }
        if it == max_iter {
            break;
        }
        for (gx, sx) in g.iter_mut().zip(&s) {
            *gx = 0.5 * (*gx + sx);
        }
    }
    Err(Error::ExtremalizeStalled { iterations: max_iter, residual: *residuals.last().unwrap(), residuals })
}

/// `x ↦ d_x − d_{base}` as points of `ℓ∞ⁿ`.
pub fn kuratowski_embed(m: &FiniteMetricSpace, base: usize) -> Result<Vec<LinfPoint>> {
    let n = m.n_points();
    if base >= n {
        return Err(Error::IndexOutOfRange { index: base, len: n });
    }
    Ok((0..n)
        .map(|x| LinfPoint::from_vec_unchecked((0..n).map(|y| m.dist[x][y] - m.dist[base][y]).collect()))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OffpointReport {
    pub sample_size: usize,
    /// Largest nearest-neighbour distance within the sample.
    pub resolution: f64,
    pub in_delta: bool,
    pub extremal: bool,
    /// `‖f − f*‖∞` for `f = ‖x − ·‖∞` on the sample.
    pub slack: f64,
}

/// Distance function from a point outside `Q`, restricted to a sample of `Q`.
///
/// `f(q) = ‖x − q‖∞` is always in `Δ` of the sample; for a dense enough sample
/// of an injective `Q` it fails to be extremal.
pub fn offpoint_nonextremality(
    s: &InjectiveSystem,
    sample: &[LinfPoint],
    x: &LinfPoint,
    tol: f64,
) -> Result<OffpointReport> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    for (k, q) in sample.iter().enumerate() {
        if !s.membership(q)?.is_inside() {
            return Err(Error::invalid(format!("sample point {k} is not in Q")));
        }
    }
    if s.membership(x)?.is_inside() {
        return Err(Error::invalid("probe point lies in Q"));
    }
    let m = FiniteMetricSpace::from_points(sample, s.geom_tol())?;
    let f = HullFunction::new(sample.iter().map(|q| linf_dist(x, q)).collect::<Result<Vec<_>>>()?)?;
    let e = is_extremal(&m, &f, tol)?;
    let n = m.n_points();
    let resolution = if n < 2 {
        0.0
    } else {
        (0..n)
            .map(|i| (0..n).filter(|&j| j != i).map(|j| m.dist[i][j]).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    Ok(OffpointReport {
        sample_size: n,
        resolution,
        in_delta: e.in_delta,
        extremal: e.extremal,
        slack: e.star_residual,
    })
}
