//! Seeded random instances.
//!
//! Every generator draws from a `ChaCha8Rng` seeded with the given value, so the
//! same seed reproduces the same instance on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::characterization::Oracle;
use crate::error::{Error, Result};
use crate::hyperplane::Functional;
use crate::isbell::FiniteMetricSpace;
use crate::linf::{LinfPoint, MAX_DIM};
use crate::lipschitz::{BoundPair, Generator, LipschitzBound, Side};
use crate::retraction::InjectiveSystem;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn check_dim(n: usize, min: usize) -> Result<()> {
    if !(min..=MAX_DIM).contains(&n) {
        return Err(Error::invalid(format!("dimension must be in {min}..={MAX_DIM}, got {n}")));
    }
    Ok(())
}

/// Shortest-path closure of a random weighted graph on `n` vertices.
///
/// A random spanning path keeps the graph connected; every other edge is
/// present with probability 1/2. Weights are drawn from `[0.5, 3)`.
pub fn shortest_path_metric(r: &mut impl Rng, n: usize) -> Result<FiniteMetricSpace> {
    if n == 0 {
        return Err(Error::invalid("metric needs at least one point"));
    }
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, r.random_range(0..=i));
    }
    for w in order.windows(2) {
        let c = r.random_range(0.5..3.0);
        d[w[0]][w[1]] = c;
        d[w[1]][w[0]] = c;
    }
    for i in 0..n {
        for j in i + 1..n {
            if r.random_bool(0.5) {
                let c: f64 = r.random_range(0.5..3.0);
                d[i][j] = d[i][j].min(c);
                d[j][i] = d[i][j];
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    FiniteMetricSpace::new(d, crate::DEFAULT_GEOM_TOL)
}

/// A random axis box with sides in `[0.5, 2.5)`.
pub fn random_box(r: &mut impl Rng, n: usize) -> Result<Oracle> {
    check_dim(n, 1)?;
    let lower: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..0.0)).collect();
    let upper = lower.iter().map(|l| l + r.random_range(0.5..2.5)).collect();
    Ok(Oracle::Box { lower, upper })
}

/// A random slab `|⟨φ, x⟩ − c| ≤ h` whose normal has a dominant coordinate,
/// so the slab is injective.
pub fn random_slab(r: &mut impl Rng, n: usize) -> Result<Oracle> {
    check_dim(n, 2)?;
    let mut coeffs: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let i = r.random_range(0..n);
    let rest: f64 = coeffs.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, c)| c.abs()).sum();
    let sign = if r.random_bool(0.5) { 1.0 } else { -1.0 };
    coeffs[i] = sign * (rest + r.random_range(0.0..1.0)).max(0.25);
    Ok(Oracle::Slab { coeffs, offset: r.random_range(-1.0..1.0), half_width: r.random_range(0.25..1.5) })
}

/// A functional with integer coefficients in `±[1, 4]`.
pub fn random_functional(r: &mut impl Rng, n: usize) -> Result<Functional> {
    check_dim(n, 2)?;
    Functional::new(
        (0..n)
            .map(|_| {
                let m = r.random_range(1..=4) as f64;
                if r.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect(),
    )
}

/// The box as constant bounds, witnessed by its centre.
pub fn box_system(lower: &[f64], upper: &[f64], geom_tol: f64) -> Result<InjectiveSystem> {
    if lower.len() != upper.len() {
        return Err(Error::DimensionMismatch { expected: lower.len(), found: upper.len() });
    }
    let pairs = lower
        .iter()
        .zip(upper)
        .map(|(&l, &u)| BoundPair::new(LipschitzBound::constant(Side::Lower, l)?, LipschitzBound::constant(Side::Upper, u)?))
        .collect::<Result<Vec<_>>>()?;
    let centre = lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect();
    InjectiveSystem::new(pairs, LinfPoint::new(centre)?, geom_tol)
}

/// The slab `|⟨φ, x⟩ − c| ≤ h` solved for its dominant coordinate.
pub fn slab_system(coeffs: &[f64], offset: f64, half_width: f64, geom_tol: f64) -> Result<InjectiveSystem> {
    let phi = Functional::new(coeffs.to_vec())?;
    let i = crate::hyperplane::injective_kernel(&phi)
        .ok_or_else(|| Error::invalid("slab normal has no dominant coordinate"))?;
    let pivot = coeffs[i];
    let weights: Vec<f64> = coeffs.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, c)| -c / pivot).collect();
    let (a, b) = ((offset - half_width) / pivot, (offset + half_width) / pivot);
    let (lo, hi) = (a.min(b), a.max(b));
    let pairs = (0..coeffs.len())
        .map(|j| {
            if j == i {
                BoundPair::new(
                    LipschitzBound::affine(Side::Lower, weights.clone(), lo)?,
                    LipschitzBound::affine(Side::Upper, weights.clone(), hi)?,
                )
            } else {
                Ok(BoundPair::free())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = vec![0.0; coeffs.len()];
    w[i] = offset / pivot;
    InjectiveSystem::new(pairs, LinfPoint::new(w)?, geom_tol)
}

/// The system for one of the closed-form oracles.
pub fn oracle_system(o: &Oracle, geom_tol: f64) -> Result<InjectiveSystem> {
    match o {
        Oracle::Box { lower, upper } => box_system(lower, upper, geom_tol),
        Oracle::Slab { coeffs, offset, half_width } => slab_system(coeffs, *offset, *half_width, geom_tol),
        Oracle::System { system } => Ok((**system).clone()),
        Oracle::Halfspace { .. } => Err(Error::invalid("halfspaces have no two-sided system form")),
    }
}

/// Random cone envelopes with constant `lambda` around a random witness.
///
/// Lower generator values are at most the witness coordinate and upper values
/// at least it, so every lower bound sits below every upper bound and the
/// witness is feasible. Each side has one to three generators; a side is
/// dropped with probability 1/4.
pub fn cone_envelope_system(r: &mut impl Rng, n: usize, lambda: f64, geom_tol: f64) -> Result<InjectiveSystem> {
    check_dim(n, 2)?;
    let witness: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut pairs = Vec::with_capacity(n);
    for &wi in &witness {
        let side = |s: Side, r: &mut dyn rand::RngCore| -> Result<LipschitzBound> {
            if r.random_bool(0.25) {
                return Ok(LipschitzBound::dropped(s));
            }
            let k = r.random_range(1..=3);
            let gens = (0..k)
                .map(|_| {
                    let anchor = LinfPoint::new((0..n - 1).map(|_| r.random_range(-2.0..2.0)).collect())?;
                    let gap = r.random_range(0.0..1.5);
                    let value = match s {
                        Side::Lower => wi - gap,
                        Side::Upper => wi + gap,
                    };
                    Ok(Generator::cone(anchor, value, 0.0))
                })
                .collect::<Result<Vec<_>>>()?;
            LipschitzBound::envelope(s, lambda, gens)
        };
        let lower = side(Side::Lower, r)?;
        let upper = side(Side::Upper, r)?;
        pairs.push(BoundPair::new(lower, upper)?);
    }
    InjectiveSystem::new(pairs, LinfPoint::new(witness)?, geom_tol)
}

/// `count` uniform points of `[lo, hi]ⁿ` that `o` rejects, each at least
/// `margin` from the set when the oracle knows its distances.
pub fn outside_points(
    r: &mut impl Rng,
    o: &Oracle,
    lo: f64,
    hi: f64,
    count: usize,
    margin: f64,
) -> Result<Vec<LinfPoint>> {
    use crate::characterization::MembershipOracle;
    let n = o.dim();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 1000 * count.max(1) {
            return Err(Error::invalid("sampling window is almost entirely inside the set"));
        }
        let x = LinfPoint::new((0..n).map(|_| r.random_range(lo..hi)).collect())?;
        if !o.contains(&x) && o.boundary_distance(&x).is_none_or(|d| d >= margin) {
            out.push(x);
        }
    }
    Ok(out)
}

/// A sample of the set that includes boundary points.
///
/// Boxes get a `k`-per-axis grid spanning each side. Slabs get a grid of the
/// non-dominant coordinates over `[−window, window]` and, above each grid
/// point, `k` evenly spaced values of the dominant coordinate between its two
/// bounds. Other oracles get the filtered grid over `[−window, window]ⁿ`.
pub fn inside_samples(o: &Oracle, k: usize, window: f64) -> Result<Vec<LinfPoint>> {
    use crate::characterization::MembershipOracle;
    let k = k.max(2);
    let n = o.dim();
    let out: Vec<LinfPoint> = match o {
        Oracle::Box { lower, upper } => grid(n, 0.0, 1.0, k)
            .into_iter()
            .map(|u| {
                LinfPoint::from_vec_unchecked((0..n).map(|i| lower[i] + (upper[i] - lower[i]) * u[i]).collect())
            })
            .collect(),
        Oracle::Slab { coeffs, offset, half_width } => {
            let phi = Functional::new(coeffs.clone())?;
            let i = crate::hyperplane::injective_kernel(&phi)
                .ok_or_else(|| Error::invalid("slab normal has no dominant coordinate"))?;
            let mut out = Vec::new();
            for y in grid(n - 1, -window, window, k) {
                let rest: f64 = (0..n).filter(|&j| j != i).zip(y.coords()).map(|(j, c)| coeffs[j] * c).sum();
                let a = (offset - half_width - rest) / coeffs[i];
                let b = (offset + half_width - rest) / coeffs[i];
                for t in 0..k {
                    let v = a + (b - a) * t as f64 / (k - 1) as f64;
                    let mut x = y.coords().to_vec();
                    x.insert(i, v);
                    let x = LinfPoint::from_vec_unchecked(x);
                    // endpoints can round to just outside
                    if o.contains(&x) {
                        out.push(x);
                    }
                }
            }
            out
        }
        _ => grid(n, -window, window, k).into_iter().filter(|x| o.contains(x)).collect(),
    };
    if out.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(out)
}

/// Regular grid over `[lo, hi]ⁿ` with `k` points per axis, last coordinate fastest.
pub fn grid(n: usize, lo: f64, hi: f64, k: usize) -> Vec<LinfPoint> {
    let axis: Vec<f64> = (0..k).map(|a| if k == 1 { lo } else { lo + (hi - lo) * a as f64 / (k - 1) as f64 }).collect();
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    out.into_iter().map(LinfPoint::from_vec_unchecked).collect()
}
