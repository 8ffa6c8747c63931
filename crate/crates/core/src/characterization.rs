//! Reconstructing an injective set from membership access and a finite sample.
//!
//! Every probe `x ∉ Q` gets a separation value
//! `ε(x) = max_p min_q (‖x − p‖ + ‖x − q‖ − ‖p − q‖)` over the inside sample,
//! a maximizing `p_x`, and the coordinate `i` where `|xᵢ − (p_x)ᵢ|` is largest.
//! The translated cone `C_x = x − s·αε·eⁱ + s·Cᵢ` (with `s` the sign of
//! `xᵢ − (p_x)ᵢ`) misses `Q`, and each such cone becomes one generator of a
//! 1-Lipschitz bound on coordinate `i`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linf::{check_dims, cone_region_slice, dist_slices, drop_coordinate, ConeRegion, ConeSign, LinfPoint};
use crate::lipschitz::{BoundPair, Generator, LipschitzBound, Side};
use crate::retraction::InjectiveSystem;

/// Largest admissible cone offset factor (exclusive).
pub const ALPHA_MAX: f64 = 0.125;
pub const DEFAULT_ALPHA: f64 = 1.0 / 16.0;
pub const DEFAULT_DELTA_FRAC: f64 = 1.0 / 8.0;

/// Points sampled along the axis of each cone when checking it against the oracle.
const RAY_PROBES: usize = 16;

pub trait MembershipOracle: Sync {
    fn dim(&self) -> usize;

    fn contains(&self, x: &LinfPoint) -> bool;

    /// Distance from `x` to the boundary of the set, when known in closed form.
    fn boundary_distance(&self, _x: &LinfPoint) -> Option<f64> {
        None
    }
}

/// The membership oracles understood by the sample file format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Oracle {
    /// `lower ≤ x ≤ upper` coordinatewise.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `|⟨coeffs, x⟩ − offset| ≤ half_width`.
    Slab { coeffs: Vec<f64>, offset: f64, half_width: f64 },
    /// `⟨coeffs, x⟩ ≤ offset`.
    Halfspace { coeffs: Vec<f64>, offset: f64 },
    System { system: Box<InjectiveSystem> },
}

impl Oracle {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|c| c.is_finite());
        match self {
            Oracle::Box { lower, upper } => {
                check_dims(lower.len(), upper.len())?;
                if lower.is_empty() || !finite(lower) || !finite(upper) {
                    return Err(Error::invalid("box bounds must be nonempty and finite"));
                }
                if lower.iter().zip(upper).any(|(l, u)| l > u) {
                    return Err(Error::invalid("box lower bound exceeds upper bound"));
                }
            }
            Oracle::Slab { coeffs, offset, half_width } => {
                if !finite(coeffs) || !offset.is_finite() || !(*half_width >= 0.0 && half_width.is_finite()) {
                    return Err(Error::invalid("slab parameters must be finite with half_width >= 0"));
                }
                if coeffs.iter().all(|c| *c == 0.0) {
                    return Err(Error::invalid("slab normal is zero"));
                }
            }
            Oracle::Halfspace { coeffs, offset } => {
                if !finite(coeffs) || !offset.is_finite() || coeffs.iter().all(|c| *c == 0.0) {
                    return Err(Error::invalid("halfspace normal must be finite and nonzero"));
                }
            }
            Oracle::System { .. } => {}
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l1(a: &[f64]) -> f64 {
    a.iter().map(|c| c.abs()).sum()
}

impl MembershipOracle for Oracle {
    fn dim(&self) -> usize {
        match self {
            Oracle::Box { lower, .. } => lower.len(),
            Oracle::Slab { coeffs, .. } | Oracle::Halfspace { coeffs, .. } => coeffs.len(),
            Oracle::System { system } => system.dim(),
        }
    }

    fn contains(&self, x: &LinfPoint) -> bool {
        if x.dim() != self.dim() {
            return false;
        }
        let x = x.coords();
        match self {
            Oracle::Box { lower, upper } => (0..x.len()).all(|i| lower[i] <= x[i] && x[i] <= upper[i]),
            Oracle::Slab { coeffs, offset, half_width } => (dot(coeffs, x) - offset).abs() <= *half_width,
            Oracle::Halfspace { coeffs, offset } => dot(coeffs, x) <= *offset,
            Oracle::System { system } => system
                .membership(&LinfPoint::from_vec_unchecked(x.to_vec()))
                .is_ok_and(|m| m.is_inside()),
        }
    }

    fn boundary_distance(&self, x: &LinfPoint) -> Option<f64> {
        if x.dim() != self.dim() {
            return None;
        }
        let x = x.coords();
        match self {
            Oracle::Box { lower, upper } => {
                if self.contains(&LinfPoint::from_vec_unchecked(x.to_vec())) {
                    Some((0..x.len()).map(|i| (x[i] - lower[i]).min(upper[i] - x[i])).fold(f64::INFINITY, f64::min))
                } else {
                    Some((0..x.len()).map(|i| (lower[i] - x[i]).max(x[i] - upper[i])).fold(0.0, f64::max))
                }
            }
            // the max-norm distance to a hyperplane ⟨φ, y⟩ = c is |⟨φ, x⟩ − c| / ‖φ‖₁
            Oracle::Slab { coeffs, offset, half_width } => {
                Some(((dot(coeffs, x) - offset).abs() - half_width).abs() / l1(coeffs))
            }
            Oracle::Halfspace { coeffs, offset } => Some((dot(coeffs, x) - offset).abs() / l1(coeffs)),
            Oracle::System { .. } => None,
        }
    }
}

impl MembershipOracle for InjectiveSystem {
    fn dim(&self) -> usize {
        InjectiveSystem::dim(self)
    }

    fn contains(&self, x: &LinfPoint) -> bool {
        self.membership(x).is_ok_and(|m| m.is_inside())
    }
}

/// Membership access to `Q` plus labelled samples of `Q` and its complement.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledSet {
    pub oracle: Oracle,
    inside: Vec<LinfPoint>,
    outside: Vec<LinfPoint>,
}

impl SampledSet {
    /// Checks every sample against the oracle.
    pub fn new(oracle: Oracle, inside: Vec<LinfPoint>, outside: Vec<LinfPoint>) -> Result<Self> {
        oracle.validate()?;
        let n = oracle.dim();
        if inside.is_empty() {
            return Err(Error::EmptySample);
        }
        for (k, p) in inside.iter().enumerate() {
            check_dims(n, p.dim())?;
            if !oracle.contains(p) {
                return Err(Error::invalid(format!("inside sample {k} = {p} fails the oracle")));
            }
        }
        for (k, p) in outside.iter().enumerate() {
            check_dims(n, p.dim())?;
            if oracle.contains(p) {
                return Err(Error::invalid(format!("outside sample {k} = {p} satisfies the oracle")));
            }
        }
        Ok(Self { oracle, inside, outside })
    }

    pub fn dim(&self) -> usize {
        self.oracle.dim()
    }

    pub fn inside(&self) -> &[LinfPoint] {
        &self.inside
    }

    pub fn outside(&self) -> &[LinfPoint] {
        &self.outside
    }
}

/// `min_q (‖x − p‖ + ‖x − q‖ − ‖p − q‖)` over `sample`.
pub fn inner_excess(sample: &[LinfPoint], x: &LinfPoint, p: &LinfPoint) -> Result<f64> {
    check_dims(x.dim(), p.dim())?;
    let xp = dist_slices(x.coords(), p.coords());
    let mut best = f64::INFINITY;
    for q in sample {
        check_dims(x.dim(), q.dim())?;
        best = best.min(xp + dist_slices(x.coords(), q.coords()) - dist_slices(p.coords(), q.coords()));
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Separation {
    pub epsilon: f64,
    pub p_index: usize,
    pub p_x: LinfPoint,
    /// `min_q ‖x − q‖` over the sample.
    pub sample_distance: f64,
}

/// `ε(x)` and the maximizing sample point (lowest index on ties).
pub fn epsilon_of(q: &SampledSet, x: &LinfPoint) -> Result<Separation> {
    epsilon_against(q.inside(), x, q.oracle.geom_tol())
}

fn epsilon_against(sample: &[LinfPoint], x: &LinfPoint, tau: f64) -> Result<Separation> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let dx: Vec<f64> = sample
        .iter()
        .map(|q| {
            check_dims(x.dim(), q.dim())?;
            Ok(dist_slices(x.coords(), q.coords()))
        })
        .collect::<Result<_>>()?;
    let sample_distance = dx.iter().copied().fold(f64::INFINITY, f64::min);
    // nearest q first: the inner minimum drops fastest that way
    let mut by_dist: Vec<usize> = (0..sample.len()).collect();
    by_dist.sort_by(|&a, &b| dx[a].total_cmp(&dx[b]));
    let mut best = (f64::NEG_INFINITY, 0);
    for (pi, p) in sample.iter().enumerate() {
        // the q = p term is exactly 2·‖x − p‖
        if 2.0 * dx[pi] <= best.0 {
            continue;
        }
        let mut inner = f64::INFINITY;
        for &qi in &by_dist {
            inner = inner.min(dx[pi] + dx[qi] - dist_slices(p.coords(), sample[qi].coords()));
            if inner <= best.0 {
                break;
            }
        }
        if inner > best.0 {
            best = (inner, pi);
        }
    }
    let epsilon = best.0.max(0.0);
    if epsilon > 2.0 * sample_distance + tau {
        return Err(Error::Internal(format!(
            "epsilon {epsilon:e} exceeds twice the sample distance {sample_distance:e}"
        )));
    }
    Ok(Separation { epsilon, p_index: best.1, p_x: sample[best.1].clone(), sample_distance })
}

impl Oracle {
    fn geom_tol(&self) -> f64 {
        match self {
            Oracle::System { system } => system.geom_tol(),
            _ => crate::DEFAULT_GEOM_TOL,
        }
    }
}

/// A probe with its separating cone `apex + sign·C_coord`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeAssignment {
    pub x: LinfPoint,
    pub epsilon: f64,
    pub p_x: LinfPoint,
    pub coord: usize,
    pub sign: ConeSign,
    pub alpha: f64,
    /// Audit value `delta_frac·ε`; the coordinate maximum is attained exactly.
    pub delta: f64,
    pub apex: LinfPoint,
    pub sample_size: usize,
}

impl ConeAssignment {
    /// Position of `y` relative to the closed cone.
    pub fn region(&self, y: &LinfPoint, tau: f64) -> Result<ConeRegion> {
        let rel = y.sub(&self.apex)?;
        Ok(cone_region_slice(rel.coords(), self.coord, self.sign, tau))
    }

    /// True when `y` is in the closed cone.
    pub fn contains(&self, y: &LinfPoint) -> Result<bool> {
        let rel = y.sub(&self.apex)?;
        let r = rel.coords();
        let axis = self.sign.factor() * r[self.coord];
        let others = r.iter().enumerate().filter(|&(j, _)| j != self.coord).fold(0.0_f64, |m, (_, c)| m.max(c.abs()));
        Ok(axis >= others)
    }

    /// The same cone with a different offset factor, skipping the contract
    /// checks. Used to probe how far the construction tolerates larger offsets.
    pub fn with_alpha_unchecked(&self, alpha: f64) -> ConeAssignment {
        let mut a = self.clone();
        a.alpha = alpha;
        a.apex = apex_of(&self.x, self.coord, self.sign, alpha * self.epsilon);
        a
    }

    /// The generator this cone contributes to the bound on `coord`.
    pub fn generator(&self) -> Result<(Side, Generator)> {
        let anchor = drop_coordinate(&self.x, self.coord)?;
        let value = self.x[self.coord];
        let shift = self.alpha * self.epsilon;
        Ok(match self.sign {
            ConeSign::Plus => (Side::Upper, Generator::cone(anchor, value, -shift)),
            ConeSign::Minus => (Side::Lower, Generator::cone(anchor, value, shift)),
        })
    }

    /// One line of the per-probe report.
    pub fn record(&self) -> AssignmentRecord {
        AssignmentRecord {
            coord: self.coord,
            sign: self.sign,
            epsilon: self.epsilon,
            shift: self.alpha * self.epsilon,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssignmentRecord {
    pub coord: usize,
    pub sign: ConeSign,
    pub epsilon: f64,
    pub shift: f64,
}

fn apex_of(x: &LinfPoint, coord: usize, sign: ConeSign, offset: f64) -> LinfPoint {
    let mut v = x.coords().to_vec();
    v[coord] -= sign.factor() * offset;
    LinfPoint::from_vec_unchecked(v)
}

fn check_params(alpha: f64, delta_frac: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < ALPHA_MAX) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1/8), got {alpha}")));
    }
    if !(delta_frac > 0.0 && delta_frac < 0.25) {
        return Err(Error::invalid(format!("delta_frac must lie in (0, 1/4), got {delta_frac}")));
    }
    Ok(())
}

/// Builds and verifies the separating cone for an outside point `x`.
pub fn assign_cone(q: &SampledSet, x: &LinfPoint, alpha: f64, delta_frac: f64) -> Result<ConeAssignment> {
    check_params(alpha, delta_frac)?;
    check_dims(q.dim(), x.dim())?;
    if q.oracle.contains(x) {
        return Err(Error::invalid(format!("probe {x} lies in Q")));
    }
    let sep = epsilon_of(q, x)?;
    let diff = x.sub(&sep.p_x)?;
    let (coord, mag) = diff
        .coords()
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, c)| if c.abs() > best.1 { (i, c.abs()) } else { best });
    if !(mag > 0.0) || !(sep.epsilon > 0.0) {
        return Err(Error::Internal(format!("probe {x} is not separated from the sample")));
    }
    let sign = if diff[coord] > 0.0 { ConeSign::Plus } else { ConeSign::Minus };
    let a = ConeAssignment {
        x: x.clone(),
        epsilon: sep.epsilon,
        p_x: sep.p_x,
        coord,
        sign,
        alpha,
        delta: delta_frac * sep.epsilon,
        apex: apex_of(x, coord, sign, alpha * sep.epsilon),
        sample_size: q.inside().len(),
    };
    if let Some(w) = q.inside().iter().find(|p| a.contains(p).unwrap_or(true)) {
        return Err(Error::ConeConstruction { probe: x.clone(), witness: w.clone() });
    }
    let reach = 2.0 * sep.epsilon;
    for k in 0..=RAY_PROBES {
        let t = reach * k as f64 / RAY_PROBES as f64;
        let y = apex_of(&a.apex, coord, sign, -t);
        if q.oracle.contains(&y) {
            return Err(Error::ConeConstruction { probe: x.clone(), witness: y });
        }
    }
    Ok(a)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assembly {
    pub system: InjectiveSystem,
    /// One per accepted probe, in probe order.
    pub assignments: Vec<ConeAssignment>,
    /// Indices of probes dropped because the oracle places them in `Q`.
    pub skipped: Vec<usize>,
}

/// Collects one cone generator per outside probe into a bound system.
///
/// Coordinates that receive no generator on a side keep an infinite bound;
/// the witness is the first inside sample point.
pub fn assemble_system(q: &SampledSet, probes: &[LinfPoint], alpha: f64, delta_frac: f64) -> Result<Assembly> {
    check_params(alpha, delta_frac)?;
    let n = q.dim();
    let mut skipped = Vec::new();
    let mut accepted = Vec::new();
    for (k, x) in probes.iter().enumerate() {
        check_dims(n, x.dim())?;
        if q.oracle.contains(x) {
            skipped.push(k);
        } else {
            accepted.push(x);
        }
    }
    let assignments: Vec<ConeAssignment> = accepted
        .par_iter()
        .map(|x| assign_cone(q, x, alpha, delta_frac))
        .collect::<Result<_>>()?;

    let mut lower: Vec<Vec<Generator>> = vec![Vec::new(); n];
    let mut upper: Vec<Vec<Generator>> = vec![Vec::new(); n];
    for a in &assignments {
        let (side, g) = a.generator()?;
        match side {
            Side::Lower => lower[a.coord].push(g),
            Side::Upper => upper[a.coord].push(g),
        }
    }
    let bound = |side: Side, gens: Vec<Generator>| -> Result<LipschitzBound> {
        if gens.is_empty() {
            Ok(LipschitzBound::dropped(side))
        } else {
            LipschitzBound::envelope(side, 1.0, gens)
        }
    };
    let pairs = lower
        .into_iter()
        .zip(upper)
        .map(|(lo, hi)| BoundPair::new(bound(Side::Lower, lo)?, bound(Side::Upper, hi)?))
        .collect::<Result<Vec<_>>>()?;
    let system = InjectiveSystem::new(pairs, q.inside()[0].clone(), q.oracle.geom_tol())
        .map_err(|e| Error::Internal(format!("assembled system rejects its witness: {e}")))?;
    Ok(Assembly { system, assignments, skipped })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConeIntersection {
    pub first: usize,
    pub second: usize,
    /// A point in both open cones.
    pub witness: LinfPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DisjointReport {
    pub pairs_checked: usize,
    pub intersections: Vec<ConeIntersection>,
}

impl DisjointReport {
    pub fn passed(&self) -> bool {
        self.intersections.is_empty()
    }
}

/// Checks that opposite-sign cones on the same coordinate have disjoint
/// interiors.
///
/// For apexes `a` (sign `+`) and `b` (sign `−`) on coordinate `i` the open
/// cones meet exactly when `bᵢ − aᵢ > ‖â − b̂‖`, and then the midpoint of the
/// apexes lies in both.
pub fn certify_disjoint_cones(assignments: &[ConeAssignment]) -> Result<DisjointReport> {
    let mut report = DisjointReport { pairs_checked: 0, intersections: Vec::new() };
    if let Some(first) = assignments.first() {
        for a in assignments {
            check_dims(first.apex.dim(), a.apex.dim())?;
        }
    }
    let mut plus: Vec<usize> = Vec::new();
    let mut minus: Vec<usize> = Vec::new();
    for (s, a) in assignments.iter().enumerate() {
        match a.sign {
            ConeSign::Plus => plus.push(s),
            ConeSign::Minus => minus.push(s),
        }
    }
    for &p in &plus {
        let a = &assignments[p];
        let i = a.coord;
        for &m in &minus {
            let b = &assignments[m];
            if b.coord != i {
                continue;
            }
            report.pairs_checked += 1;
            let gap = b.apex[i] - a.apex[i];
            let lateral = a
                .apex
                .coords()
                .iter()
                .zip(b.apex.coords())
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, (u, v))| (u - v).abs())
                .fold(0.0, f64::max);
            if gap > lateral {
                let witness = a.apex.add(&b.apex)?.scale(0.5);
                let (first, second) = if p < m { (p, m) } else { (m, p) };
                report.intersections.push(ConeIntersection { first, second, witness });
            }
        }
    }
    report.intersections.sort_by_key(|c| (c.first, c.second));
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgreementReport {
    pub points: usize,
    pub agree: usize,
    /// Points `Q` contains but the system rejects.
    pub false_exclusions: usize,
    /// Points outside `Q` the system accepts.
    pub false_inclusions: usize,
    /// Largest boundary distance among disagreeing points, when the oracle
    /// provides distances.
    pub max_disagreement_depth: Option<f64>,
}

impl AgreementReport {
    pub fn agreement_ratio(&self) -> f64 {
        if self.points == 0 {
            1.0
        } else {
            self.agree as f64 / self.points as f64
        }
    }
}

/// Compares system membership with the oracle on `points`.
pub fn agreement(system: &InjectiveSystem, oracle: &Oracle, points: &[LinfPoint]) -> Result<AgreementReport> {
    let verdicts: Vec<(bool, bool, Option<f64>)> = points
        .par_iter()
        .map(|p| {
            let truth = oracle.contains(p);
            let got = system.membership(p)?.is_inside();
            Ok((truth, got, oracle.boundary_distance(p)))
        })
        .collect::<Result<_>>()?;
    let mut r = AgreementReport {
        points: points.len(),
        agree: 0,
        false_exclusions: 0,
        false_inclusions: 0,
        max_disagreement_depth: None,
    };
    let mut depth: Option<f64> = Some(0.0);
    let mut any = false;
    for (truth, got, d) in verdicts {
        if truth == got {
            r.agree += 1;
            continue;
        }
        any = true;
        if truth {
            r.false_exclusions += 1;
        } else {
            r.false_inclusions += 1;
        }
        depth = match (depth, d) {
            (Some(m), Some(d)) => Some(m.max(d)),
            _ => None,
        };
    }
    r.max_disagreement_depth = if any { depth } else { Some(0.0) };
    Ok(r)
}
