//! Max-norm geometry on ℝⁿ.
//!
//! Points, the Chebyshev distance, coordinate deletion, the coordinate cones
//! `Cᵢ = { x : xᵢ = ‖x‖ }` and intersections of closed balls. Balls in the max
//! norm are axis-aligned boxes, so ball families intersect iff every coordinate
//! interval does.

use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest dimension accepted by the workspace-level constructors.
pub const MAX_DIM: usize = 64;

/// A point of ℝⁿ with finite coordinates, measured in the max norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LinfPoint(Vec<f64>);

impl LinfPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("point coordinates"));
        }
        Ok(Self(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// The standard unit vector `eⁱ` of ℝⁿ.
    pub fn unit(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Self(v)
    }

    /// Builds a point from coordinates already known to be finite.
    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        debug_assert!(coords.iter().all(|c| c.is_finite()));
        Self(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `‖x‖∞`.
    pub fn norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, c| m.max(c.abs()))
    }


    pub fn add(&self, other: &LinfPoint) -> Result<LinfPoint> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    pub fn sub(&self, other: &LinfPoint) -> Result<LinfPoint> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    pub fn scale(&self, s: f64) -> LinfPoint {
        Self(self.0.iter().map(|c| c * s).collect())
    }

    pub fn neg(&self) -> LinfPoint {
        self.scale(-1.0)
    }
}

impl TryFrom<Vec<f64>> for LinfPoint {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        LinfPoint::new(v)
    }
}

impl From<LinfPoint> for Vec<f64> {
    fn from(p: LinfPoint) -> Self {
        p.0
    }
}

impl Index<usize> for LinfPoint {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Display for LinfPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Max-norm distance on raw slices of equal length.
#[inline]
pub(crate) fn dist_slices(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter()
        .zip(y)
        .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

/// `‖x − y‖∞`.
pub fn linf_dist(x: &LinfPoint, y: &LinfPoint) -> Result<f64> {
    check_dims(x.dim(), y.dim())?;
    Ok(dist_slices(x.coords(), y.coords()))
}

/// Removes coordinate `i`, keeping the order of the others.
pub fn drop_coordinate(x: &LinfPoint, i: usize) -> Result<LinfPoint> {
    if x.dim() < 2 {
        return Err(Error::invalid("drop_coordinate needs dimension >= 2"));
    }
    if i >= x.dim() {
        return Err(Error::IndexOutOfRange { index: i, len: x.dim() });
    }
    let mut v = x.0.clone();
    v.remove(i);
    Ok(LinfPoint(v))
}

/// Selects `Cᵢ` or its reflection `−Cᵢ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConeSign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl ConeSign {
    pub fn factor(self) -> f64 {
        match self {
            ConeSign::Plus => 1.0,
            ConeSign::Minus => -1.0,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            ConeSign::Plus => ConeSign::Minus,
            ConeSign::Minus => ConeSign::Plus,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeRegion {
    Interior,
    Boundary,
    Outside,
}

/// Locates `x` relative to `Cᵢ` (or `−Cᵢ` for [`ConeSign::Minus`]).
///
/// `Interior` means `xᵢ > max_{j≠i} |xⱼ|`; `Boundary` means `|xᵢ − ‖x‖| ≤ tau`
/// without being interior.
pub fn cone_membership(x: &LinfPoint, i: usize, sign: ConeSign, tau: f64) -> Result<ConeRegion> {
    if i >= x.dim() {
        return Err(Error::IndexOutOfRange { index: i, len: x.dim() });
    }
    Ok(cone_region_slice(x.coords(), i, sign, tau))
}

pub(crate) fn cone_region_slice(x: &[f64], i: usize, sign: ConeSign, tau: f64) -> ConeRegion {
    let xi = sign.factor() * x[i];
    let others = x
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .fold(0.0_f64, |m, (_, c)| m.max(c.abs()));
    let norm = others.max(xi.abs());
    if (xi - norm).abs() > tau {
        ConeRegion::Outside
    } else if xi > others + tau {
        ConeRegion::Interior
    } else {
        ConeRegion::Boundary
    }
}

/// Closed max-norm ball, i.e. the box `center ± radius`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: LinfPoint,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: LinfPoint, radius: f64) -> Result<Self> {
        if !radius.is_finite() || radius < 0.0 {
            return Err(Error::invalid(format!("ball radius must be finite and >= 0, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, x: &LinfPoint, tau: f64) -> Result<bool> {
        Ok(linf_dist(&self.center, x)? <= self.radius + tau)
    }
}

/// Per-coordinate `[max lower, min upper]` of a ball family; `dim` is used
/// when the family is empty (the whole space).
pub fn intersection_box(balls: &[Ball], dim: usize) -> Result<Vec<(f64, f64)>> {
    let mut bx = vec![(f64::NEG_INFINITY, f64::INFINITY); dim];
    for b in balls {
        check_dims(dim, b.center.dim())?;
        for (k, c) in b.center.coords().iter().enumerate() {
            bx[k].0 = bx[k].0.max(c - b.radius);
            bx[k].1 = bx[k].1.min(c + b.radius);
        }
    }
    Ok(bx)
}

/// A point in the common intersection of `balls`, or `None` if it is empty.
///
/// Returns the midpoint of each coordinate interval; an empty family yields the
/// origin. Intervals inverted by at most `tau` count as touching.
pub fn balls_feasible(balls: &[Ball], dim: usize, tau: f64) -> Result<Option<LinfPoint>> {
    let bx = intersection_box(balls, dim)?;
    let mut out = Vec::with_capacity(dim);
    for (lo, hi) in bx {
        if lo > hi + tau {
            return Ok(None);
        }
        let mid = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo.max(0.0),
            (false, true) => hi.min(0.0),
            (false, false) => 0.0,
        };
        out.push(mid);
    }
    Ok(Some(LinfPoint(out)))
}

/// Whether every pair satisfies `r_β + r_γ ≥ ‖c_β − c_γ‖ − tau`.
pub fn pairwise_compatible(balls: &[Ball], tau: f64) -> Result<bool> {
    for (a, ba) in balls.iter().enumerate() {
        for bb in &balls[a + 1..] {
            if ba.radius + bb.radius < linf_dist(&ba.center, &bb.center)? - tau {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
