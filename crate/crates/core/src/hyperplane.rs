//! Kernels of linear functionals on `ℓ∞ⁿ`.
//!
//! `ker φ` is injective exactly when some coordinate dominates,
//! `|φᵢ| ≥ Σ_{j≠i} |φⱼ|`, or equivalently `‖φ‖₁ ≤ 2‖φ‖∞`. Then the kernel is the
//! graph of a 1-Lipschitz affine function of the other coordinates. Otherwise
//! every coordinate cone meets the kernel in its interior, and those kernel
//! vectors give a family of balls centred on the kernel whose only common
//! point lies off it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linf::{balls_feasible, check_dims, intersection_box, linf_dist, Ball, LinfPoint, MAX_DIM};
use crate::lipschitz::{BoundPair, LipschitzBound, Side};
use crate::retraction::InjectiveSystem;

/// A nonzero linear functional `x ↦ Σ φᵢ xᵢ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Functional {
    coeffs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Functional {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Functional::new(v)
    }
}

impl From<Functional> for Vec<f64> {
    fn from(f: Functional) -> Self {
        f.coeffs
    }
}

impl Functional {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&coeffs.len()) {
            return Err(Error::invalid(format!("functional needs 2..={MAX_DIM} coefficients, got {}", coeffs.len())));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("functional coefficients"));
        }
        if coeffs.iter().all(|c| *c == 0.0) {
            return Err(Error::invalid("functional is zero"));
        }
        Ok(Self { coeffs })
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn apply(&self, x: &LinfPoint) -> Result<f64> {
        check_dims(self.dim(), x.dim())?;
        Ok(self.coeffs.iter().zip(x.coords()).map(|(a, b)| a * b).sum())
    }

    pub fn norm_l1(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }

    pub fn norm_linf(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// `Σ_{j≠i} |φⱼ|`.
    fn off_mass(&self, i: usize) -> f64 {
        self.coeffs.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, c)| c.abs()).sum()
    }
}

/// The lowest coordinate `i` with `|φᵢ| ≥ Σ_{j≠i} |φⱼ|`, if any.
pub fn injective_kernel(phi: &Functional) -> Option<usize> {
    (0..phi.dim()).find(|&i| phi.coeffs[i].abs() >= phi.off_mass(i))
}

/// `ker φ` as the graph `xᵢ = ⟨w, x̂ᵢ⟩` with `w = −φ̂ᵢ/φᵢ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelBounds {
    pub coord: usize,
    pub weights: Vec<f64>,
    /// Equal lower and upper bounds on `coord`.
    pub pair: BoundPair,
}

impl KernelBounds {
    /// Replaces coordinate `coord` of `x` with the value that puts it in the kernel.
    pub fn project(&self, x: &LinfPoint) -> Result<LinfPoint> {
        check_dims(self.weights.len() + 1, x.dim())?;
        let mut v = x.coords().to_vec();
        v[self.coord] = self.solve(&v);
        Ok(LinfPoint::from_vec_unchecked(v))
    }

    fn solve(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .filter(|&(j, _)| j != self.coord)
            .zip(&self.weights)
            .map(|((_, a), w)| a * w)
            .sum()
    }

    /// The kernel as an inequality system; other coordinates are unconstrained.
    pub fn system(&self, geom_tol: f64) -> Result<InjectiveSystem> {
        let n = self.weights.len() + 1;
        let pairs = (0..n)
            .map(|j| if j == self.coord { self.pair.clone() } else { BoundPair::free() })
            .collect();
        InjectiveSystem::new(pairs, LinfPoint::zeros(n), geom_tol)
    }
}

pub fn kernel_bounds(phi: &Functional, i: usize) -> Result<KernelBounds> {
    if i >= phi.dim() {
        return Err(Error::IndexOutOfRange { index: i, len: phi.dim() });
    }
    let pivot = phi.coeffs[i];
    if pivot.abs() < phi.off_mass(i) {
        return Err(Error::invalid(format!(
            "coordinate {i} does not dominate: |{pivot}| < {}",
            phi.off_mass(i)
        )));
    }
    let weights: Vec<f64> =
        phi.coeffs.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, c)| -c / pivot).collect();
    let pair = BoundPair::new(
        LipschitzBound::affine(Side::Lower, weights.clone(), 0.0)?,
        LipschitzBound::affine(Side::Upper, weights.clone(), 0.0)?,
    )?;
    Ok(KernelBounds { coord: i, weights, pair })
}

/// Balls centred on `ker φ` that pairwise intersect yet share only `p ∉ ker φ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HyperconvexityWitness {
    pub p: LinfPoint,
    /// `vʲ ∈ ker φ` with `|vʲⱼ| > max_{k≠j} |vʲₖ|`.
    pub kernel_vectors: Vec<LinfPoint>,
    pub scales: Vec<f64>,
    /// Balls `B(αⱼvʲ, ‖p − αⱼvʲ‖)` and `B(−αⱼvʲ, ‖p + αⱼvʲ‖)`, interleaved.
    pub balls: Vec<Ball>,
    /// Largest `|φ(c)|` over ball centres.
    pub center_residual: f64,
    /// Largest distance from the intersection box's endpoints to `p`.
    pub pin_error: f64,
    pub phi_at_p: f64,
}

/// `p` defaults to `φ/‖φ‖₂²`, so `φ(p) = 1`.
pub fn nonhyperconvex_witness(phi: &Functional, p: Option<&LinfPoint>, geom_tol: f64) -> Result<HyperconvexityWitness> {
    if let Some(i) = injective_kernel(phi) {
        return Err(Error::invalid(format!("kernel is injective (coordinate {i} dominates)")));
    }
    let n = phi.dim();
    let p = match p {
        Some(p) => {
            check_dims(n, p.dim())?;
            p.clone()
        }
        None => {
            let s: f64 = phi.coeffs.iter().map(|c| c * c).sum();
            LinfPoint::new(phi.coeffs.iter().map(|c| c / s).collect())?
        }
    };
    let phi_at_p = phi.apply(&p)?;
    let scale = phi.norm_l1() * p.norm().max(1.0);
    if phi_at_p.abs() <= geom_tol * scale {
        return Err(Error::invalid("p lies in the kernel"));
    }

    let mut kernel_vectors = Vec::with_capacity(n);
    let mut scales = Vec::with_capacity(n);
    let mut balls = Vec::with_capacity(2 * n);
    let mut center_residual: f64 = 0.0;
    for j in 0..n {
        let mass = phi.off_mass(j);
        let mut v = vec![0.0; n];
        v[j] = 1.0;
        for k in (0..n).filter(|&k| k != j) {
            v[k] = -phi.coeffs[k].signum() * phi.coeffs[j] / mass;
        }
        let lateral = phi.coeffs[j].abs() / mass;
        if !(lateral < 1.0) {
            return Err(Error::Internal(format!("kernel vector {j} is not interior: lateral {lateral}")));
        }
        let v = LinfPoint::new(v)?;
        let alpha = 2.0 * p.norm() / (1.0 - lateral);
        for c in [v.scale(alpha), v.scale(-alpha)] {
            center_residual = center_residual.max(phi.apply(&c)?.abs());
            let r = linf_dist(&p, &c)?;
            balls.push(Ball::new(c, r)?);
        }
        kernel_vectors.push(v);
        scales.push(alpha);
    }

    let max_alpha = scales.iter().copied().fold(0.0, f64::max);
    let tau = geom_tol * (1.0 + max_alpha);
    if center_residual > tau * phi.norm_l1() {
        return Err(Error::Internal(format!("ball centres leave the kernel by {center_residual:e}")));
    }
    for b in &balls {
        if !b.contains(&p, tau)? {
            return Err(Error::Internal("a witness ball misses p".into()));
        }
    }
    let bx = intersection_box(&balls, n)?;
    let pin_error = bx
        .iter()
        .zip(p.coords())
        .map(|(&(lo, hi), &c)| (lo - c).abs().max((hi - c).abs()))
        .fold(0.0, f64::max);
    if pin_error > tau || balls_feasible(&balls, n, tau)?.is_none() {
        return Err(Error::Internal(format!("ball family does not pin p (error {pin_error:e})")));
    }
    Ok(HyperconvexityWitness { p, kernel_vectors, scales, balls, center_residual, pin_error, phi_at_p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linf::{cone_membership, ConeRegion, ConeSign};
    use crate::retraction::RetractConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn phi(v: &[f64]) -> Functional {
        Functional::new(v.to_vec()).unwrap()
    }

    fn p(v: &[f64]) -> LinfPoint {
        LinfPoint::new(v.to_vec()).unwrap()
    }

    #[test]
    fn criterion_examples() {
        assert_eq!(injective_kernel(&phi(&[1.0, 1.0])), Some(0));
        assert_eq!(injective_kernel(&phi(&[1.0, 1.0, 1.0])), None);
        assert_eq!(injective_kernel(&phi(&[0.5, -3.0, 2.5])), Some(1));
        assert!(Functional::new(vec![0.0, 0.0]).is_err());
        assert!(Functional::new(vec![1.0]).is_err());
    }

    #[test]
    fn criterion_matches_norm_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..500 {
            let n = rng.random_range(2..=4);
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(1..=4) as f64 * if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
            let f = phi(&c);
            assert_eq!(injective_kernel(&f).is_some(), f.norm_l1() <= 2.0 * f.norm_linf());
        }
    }

    /// Random kernel vectors: Euclidean projection of a Gaussian-ish draw.
    fn kernel_samples(f: &Functional, rng: &mut ChaCha8Rng, count: usize) -> Vec<LinfPoint> {
        let c = f.coeffs();
        let s: f64 = c.iter().map(|a| a * a).sum();
        (0..count)
            .map(|_| {
                let u: Vec<f64> = c.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
                let t = u.iter().zip(c).map(|(a, b)| a * b).sum::<f64>() / s;
                p(&u.iter().zip(c).map(|(a, b)| a - t * b).collect::<Vec<_>>())
            })
            .collect()
    }

    #[test]
    fn reported_coordinate_avoids_kernel_cones() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..50 {
            let f = phi(&(0..4).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<_>>());
            if let Some(i) = injective_kernel(&f) {
                for v in kernel_samples(&f, &mut rng, 10_000) {
                    for s in [ConeSign::Plus, ConeSign::Minus] {
                        assert_ne!(cone_membership(&v, i, s, 1e-12).unwrap(), ConeRegion::Interior);
                    }
                }
            }
        }
    }

    #[test]
    fn projection_examples() {
        let k = kernel_bounds(&phi(&[1.0, 1.0]), 0).unwrap();
        assert_eq!(k.project(&p(&[3.0, 2.0])).unwrap(), p(&[-2.0, 2.0]));
        let k = kernel_bounds(&phi(&[2.0, 1.0, -1.0]), 0).unwrap();
        assert_eq!(k.project(&p(&[5.0, 2.0, 4.0])).unwrap(), p(&[1.0, 2.0, 4.0]));
        assert!(kernel_bounds(&phi(&[1.0, 1.0, 1.0]), 0).is_err());
    }

    #[test]
    fn projection_is_nonexpansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let f = phi(&[3.0, 1.0, -1.5, 0.5]);
        let k = kernel_bounds(&f, injective_kernel(&f).unwrap()).unwrap();
        for _ in 0..100 {
            let x = p(&(0..4).map(|_| rng.random_range(-5.0..5.0)).collect::<Vec<_>>());
            let y = p(&(0..4).map(|_| rng.random_range(-5.0..5.0)).collect::<Vec<_>>());
            let (px, py) = (k.project(&x).unwrap(), k.project(&y).unwrap());
            assert!(linf_dist(&px, &py).unwrap() <= linf_dist(&x, &y).unwrap() + 1e-12);
            assert!(f.apply(&px).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn bounds_evaluate_to_projection() {
        let f = phi(&[2.0, 1.0, -1.0]);
        let k = kernel_bounds(&f, 0).unwrap();
        let y = p(&[2.0, 4.0]);
        assert_eq!(k.pair.lower.evaluate(&y).unwrap(), 1.0);
        assert_eq!(k.pair.upper.evaluate(&y).unwrap(), 1.0);
    }

    #[test]
    fn projection_agrees_with_retraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for f in [phi(&[3.0, 1.0, -1.5]), phi(&[2.0, 1.0, -1.0])] {
            let k = kernel_bounds(&f, 0).unwrap();
            let s = k.system(1e-9).unwrap();
            let cfg = RetractConfig::with_tol(1e-9);
            for _ in 0..100 {
                let x = p(&(0..3).map(|_| rng.random_range(-5.0..5.0)).collect::<Vec<_>>());
                let (r, _) = s.retract(&x, &cfg).unwrap();
                assert!(f.apply(&r).unwrap().abs() < 1e-8 * f.norm_l1());
                if s.lambda() < 1.0 {
                    assert!(linf_dist(&r, &k.project(&x).unwrap()).unwrap() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn witness_for_three_ones() {
        let f = phi(&[1.0, 1.0, 1.0]);
        let w = nonhyperconvex_witness(&f, None, 1e-9).unwrap();
        assert_eq!(w.balls.len(), 6);
        assert!((w.phi_at_p - 1.0).abs() < 1e-15);
        assert!(w.pin_error <= 1e-9);
        for v in &w.kernel_vectors {
            assert!(f.apply(v).unwrap().abs() < 1e-15);
        }
        let b = intersection_box(&w.balls, 3).unwrap();
        for (j, (lo, hi)) in b.iter().enumerate() {
            assert!((lo - w.p[j]).abs() < 1e-12 && (hi - w.p[j]).abs() < 1e-12);
        }
        let e0 = nonhyperconvex_witness(&f, Some(&p(&[1.0, 0.0, 0.0])), 1e-9).unwrap();
        assert_eq!(e0.balls.len(), 6);
        assert!(e0.pin_error <= 1e-9);
        assert!(nonhyperconvex_witness(&phi(&[1.0, 1.0]), None, 1e-9).is_err());
        assert!(nonhyperconvex_witness(&f, Some(&p(&[1.0, -1.0, 0.0])), 1e-9).is_err());
    }

    #[test]
    fn witness_balls_pairwise_intersect() {
        let f = phi(&[1.0, -2.0, 1.5, 0.7]);
        let w = nonhyperconvex_witness(&f, None, 1e-9).unwrap();
        for a in &w.balls {
            for b in &w.balls {
                assert!(a.radius + b.radius >= linf_dist(&a.center, &b.center).unwrap() - 1e-9);
            }
        }
        // every ball centre lies on the kernel, the common point does not
        assert!(w.center_residual < 1e-9);
        assert!(w.phi_at_p.abs() > 0.5);
    }
}
