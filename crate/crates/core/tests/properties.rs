use hkit_core::characterization::{
    assemble_system, assign_cone, epsilon_of, inner_excess, MembershipOracle, Oracle, SampledSet, DEFAULT_ALPHA,
    DEFAULT_DELTA_FRAC,
};
use hkit_core::generate::{self, grid, inside_samples};
use hkit_core::hyperplane::{injective_kernel, kernel_bounds, nonhyperconvex_witness, Functional};
use hkit_core::isbell::{extremalize, in_delta, is_extremal, kuratowski_embed, star, FiniteMetricSpace, HullFunction};
use hkit_core::linf::{balls_feasible, linf_dist, pairwise_compatible};
use hkit_core::lipschitz::certify_lipschitz;
use hkit_core::{Ball, ConeSign, InjectiveSystem, LinfPoint, RetractConfig, RetractMethod, DEFAULT_GEOM_TOL};
use proptest::prelude::*;
use rand::Rng;

const TAU: f64 = DEFAULT_GEOM_TOL;

fn pt(n: usize, r: f64) -> impl Strategy<Value = LinfPoint> {
    prop::collection::vec(-r..r, n).prop_map(|v| LinfPoint::new(v).unwrap())
}

fn balls(n: usize) -> impl Strategy<Value = Vec<Ball>> {
    prop::collection::vec((pt(n, 4.0), 0.0..4.0f64), 1..=6)
        .prop_map(|bs| bs.into_iter().map(|(c, r)| Ball::new(c, r).unwrap()).collect())
}

fn metric(seed: u64, n: usize) -> FiniteMetricSpace {
    generate::shortest_path_metric(&mut generate::rng(seed), n).unwrap()
}

fn point_in(r: &mut impl Rng, n: usize, lo: f64, hi: f64) -> LinfPoint {
    LinfPoint::new((0..n).map(|_| r.random_range(lo..hi)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ball_family_feasible_iff_pairwise_compatible(n in 1usize..=4, seed in any::<u64>()) {
        let fam = {
            let mut r = generate::rng(seed);
            (0..r.random_range(1..=6))
                .map(|_| Ball::new(point_in(&mut r, n, -4.0, 4.0), r.random_range(0.0..4.0)).unwrap())
                .collect::<Vec<_>>()
        };
        let found = balls_feasible(&fam, n, TAU).unwrap();
        prop_assert_eq!(found.is_some(), pairwise_compatible(&fam, TAU).unwrap());
        if let Some(p) = found {
            for b in &fam {
                prop_assert!(b.contains(&p, TAU).unwrap());
            }
        }
    }

    #[test]
    fn feasible_point_lies_in_every_ball(fam in balls(3)) {
        if let Some(p) = balls_feasible(&fam, 3, TAU).unwrap() {
            prop_assert!(fam.iter().all(|b| b.contains(&p, TAU).unwrap()));
        }
    }

    #[test]
    fn contractive_retraction_is_nonexpansive_and_idempotent(seed in any::<u64>(), n in 2usize..=4) {
        let mut r = generate::rng(seed);
        let s = generate::cone_envelope_system(&mut r, n, 0.5, TAU).unwrap();
        let cfg = RetractConfig::with_tol(1e-10);
        let x = point_in(&mut r, n, -5.0, 5.0);
        let y = point_in(&mut r, n, -5.0, 5.0);
        let (rx, _) = s.retract(&x, &cfg).unwrap();
        let (ry, _) = s.retract(&y, &cfg).unwrap();
        prop_assert!(s.membership(&rx).unwrap().is_inside());
        prop_assert!(linf_dist(&rx, &ry).unwrap() <= linf_dist(&x, &y).unwrap() + 4e-10);
        let (rrx, _) = s.retract(&rx, &cfg).unwrap();
        prop_assert!(linf_dist(&rx, &rrx).unwrap() <= 1e-10);
    }

    #[test]
    fn sweep_residuals_contract_by_lambda(seed in any::<u64>(), n in 2usize..=4, lambda in 0.1f64..0.9) {
        let mut r = generate::rng(seed);
        let s = generate::cone_envelope_system(&mut r, n, lambda, TAU).unwrap();
        let x = point_in(&mut r, n, -10.0, 10.0);
        let (_, trace) = s.retract_contractive(&x, &RetractConfig::with_tol(1e-10)).unwrap();
        for w in trace.residuals.windows(2) {
            prop_assert!(w[1] <= s.lambda() * w[0] + 1e-12);
        }
    }

    #[test]
    fn schedule_on_kernel_matches_projection(x in pt(3, 5.0)) {
        let phi = Functional::new(vec![3.0, -1.0, 2.0]).unwrap();
        let kb = kernel_bounds(&phi, 0).unwrap();
        let s = kb.system(TAU).unwrap();
        let (y, _) = s.retract_with(RetractMethod::Schedule, &x, &RetractConfig::default()).unwrap();
        prop_assert!(linf_dist(&y, &kb.project(&x).unwrap()).unwrap() <= 1e-8);
    }

    #[test]
    fn generated_envelopes_respect_requested_lambda(seed in any::<u64>(), n in 2usize..=4, lambda in 0.1f64..=1.0) {
        let mut r = generate::rng(seed);
        let s = generate::cone_envelope_system(&mut r, n, lambda, TAU).unwrap();
        let pairs: Vec<_> = (0..50).map(|_| (point_in(&mut r, n - 1, -5.0, 5.0), point_in(&mut r, n - 1, -5.0, 5.0))).collect();
        for p in s.pairs() {
            prop_assert!(p.lambda() <= lambda);
            for b in [&p.lower, &p.upper] {
                prop_assert!(certify_lipschitz(b, &pairs, 1e-12).unwrap().passed());
            }
        }
        prop_assert!(s.membership(s.witness()).unwrap().is_inside());
    }

    #[test]
    fn star_is_below_functions_in_delta(seed in any::<u64>(), n in 2usize..=7, bumps in prop::collection::vec(0.0..3.0f64, 7)) {
        let m = metric(seed, n);
        let base = m.distance_function(0).unwrap();
        let f = HullFunction::new(base.values().iter().zip(&bumps).map(|(v, b)| v + b).collect()).unwrap();
        prop_assert!(in_delta(&m, &f).unwrap().member);
        let g = star(&m, &f).unwrap();
        for (a, b) in g.values().iter().zip(f.values()) {
            prop_assert!(*a <= b + 1e-12);
        }
    }

    #[test]
    fn extremal_functions_are_one_lipschitz(seed in any::<u64>(), n in 2usize..=7, bumps in prop::collection::vec(0.0..3.0f64, 7)) {
        let m = metric(seed, n);
        let base = m.distance_function(n - 1).unwrap();
        let f = HullFunction::new(base.values().iter().zip(&bumps).map(|(v, b)| v + b).collect()).unwrap();
        let g = extremalize(&m, &f, 1e-10, 1_000_000).unwrap().function;
        prop_assert!(is_extremal(&m, &g, 1e-8).unwrap().extremal);
        for x in 0..n {
            prop_assert!(g.values()[x] <= f.values()[x]);
            for y in 0..n {
                prop_assert!((g.values()[x] - g.values()[y]).abs() <= m.dist(x, y) + 1e-8);
            }
        }
    }

    #[test]
    fn hull_sup_distance_is_a_metric(seed in any::<u64>(), n in 2usize..=6, picks in prop::collection::vec(0.0..2.0f64, 18)) {
        let m = metric(seed, n);
        let hull: Vec<HullFunction> = (0..3)
            .map(|k| {
                let base = m.distance_function(k % n).unwrap();
                let f = HullFunction::new(base.values().iter().zip(&picks[6 * k..]).map(|(v, b)| v + b).collect()).unwrap();
                extremalize(&m, &f, 1e-10, 1_000_000).unwrap().function
            })
            .collect();
        let d = |a: usize, b: usize| hull[a].sup_dist(&hull[b]).unwrap();
        for a in 0..3 {
            prop_assert_eq!(d(a, a), 0.0);
            for b in 0..3 {
                prop_assert_eq!(d(a, b), d(b, a));
                for c in 0..3 {
                    prop_assert!(d(a, c) <= d(a, b) + d(b, c) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn kuratowski_embedding_is_isometric(seed in any::<u64>(), n in 2usize..=8, base in 0usize..8) {
        let m = metric(seed, n);
        let e = kuratowski_embed(&m, base % n).unwrap();
        for x in 0..n {
            for y in 0..n {
                prop_assert!((linf_dist(&e[x], &e[y]).unwrap() - m.dist(x, y)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn point_distance_functions_are_extremal(seed in any::<u64>(), n in 2usize..=8) {
        let m = metric(seed, n);
        for x in 0..n {
            prop_assert!(is_extremal(&m, &m.distance_function(x).unwrap(), 1e-9).unwrap().extremal);
        }
    }

    #[test]
    fn metric_json_round_trip(seed in any::<u64>(), n in 2usize..=6) {
        let m = metric(seed, n);
        let text = serde_json::to_string(&m).unwrap();
        let back: FiniteMetricSpace = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.matrix(), m.matrix());
    }

    #[test]
    fn system_json_round_trip(seed in any::<u64>(), n in 2usize..=4) {
        let s = generate::cone_envelope_system(&mut generate::rng(seed), n, 0.5, TAU).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: InjectiveSystem = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), text);
        let x = point_in(&mut generate::rng(seed ^ 1), n, -3.0, 3.0);
        prop_assert_eq!(s.membership(&x).unwrap(), back.membership(&x).unwrap());
    }

    #[test]
    fn generation_is_deterministic(seed in any::<u64>(), n in 2usize..=4) {
        let a = generate::cone_envelope_system(&mut generate::rng(seed), n, 0.5, TAU).unwrap();
        let b = generate::cone_envelope_system(&mut generate::rng(seed), n, 0.5, TAU).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let ma = metric(seed, n + 2);
        let mb = metric(seed, n + 2);
        prop_assert_eq!(ma.matrix(), mb.matrix());
    }

    #[test]
    fn hyperplane_verdict_matches_dominance(coeffs in prop::collection::vec(prop_oneof![-4.0..-0.25f64, 0.25..4.0f64], 2..=4)) {
        let phi = Functional::new(coeffs.clone()).unwrap();
        let l1: f64 = coeffs.iter().map(|c| c.abs()).sum();
        let dominant = coeffs.iter().any(|c| 2.0 * c.abs() >= l1);
        prop_assert_eq!(injective_kernel(&phi).is_some(), dominant);
        match injective_kernel(&phi) {
            Some(i) => {
                let kb = kernel_bounds(&phi, i).unwrap();
                let x = LinfPoint::new(coeffs.iter().map(|c| c * 0.7 - 0.3).collect()).unwrap();
                prop_assert!(phi.apply(&kb.project(&x).unwrap()).unwrap().abs() <= 1e-9 * (1.0 + x.norm() * l1));
            }
            None => {
                let w = nonhyperconvex_witness(&phi, None, TAU).unwrap();
                prop_assert!(w.pin_error <= 1e-9);
                prop_assert!(pairwise_compatible(&w.balls, TAU).unwrap());
                prop_assert!(w.phi_at_p.abs() > 0.5);
            }
        }
    }

    #[test]
    fn kernel_projection_is_one_lipschitz(coeffs in prop::collection::vec(prop_oneof![-4.0..-0.25f64, 0.25..4.0f64], 2..=4), x in pt(4, 5.0), y in pt(4, 5.0)) {
        let phi = Functional::new(coeffs.clone()).unwrap();
        if let Some(i) = injective_kernel(&phi) {
            let n = coeffs.len();
            let x = LinfPoint::new(x.coords()[..n].to_vec()).unwrap();
            let y = LinfPoint::new(y.coords()[..n].to_vec()).unwrap();
            let kb = kernel_bounds(&phi, i).unwrap();
            let d = linf_dist(&kb.project(&x).unwrap(), &kb.project(&y).unwrap()).unwrap();
            prop_assert!(d <= linf_dist(&x, &y).unwrap() * (1.0 + 1e-12) + 1e-12);
        }
    }
}

fn unit_box() -> Oracle {
    Oracle::Box { lower: vec![0.0, 0.0], upper: vec![1.0, 1.0] }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn epsilon_is_at_most_twice_the_sample_distance(x in pt(2, 3.0)) {
        let o = unit_box();
        prop_assume!(!o.contains(&x));
        let q = SampledSet::new(o.clone(), inside_samples(&o, 11, 0.0).unwrap(), vec![]).unwrap();
        let s = epsilon_of(&q, &x).unwrap();
        let d = q.inside().iter().map(|p| linf_dist(p, &x).unwrap()).fold(f64::INFINITY, f64::min);
        prop_assert!(s.epsilon > 0.0);
        prop_assert!(s.epsilon <= 2.0 * d + TAU);
    }

    #[test]
    fn inner_excess_shrinks_as_the_sample_grows(x in pt(2, 3.0), extra in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..20)) {
        let o = unit_box();
        prop_assume!(!o.contains(&x));
        let small = inside_samples(&o, 5, 0.0).unwrap();
        let mut big = small.clone();
        big.extend(extra.iter().map(|&(a, b)| LinfPoint::new(vec![a, b]).unwrap()));
        for p in &small {
            prop_assert!(inner_excess(&big, &x, p).unwrap() <= inner_excess(&small, &x, p).unwrap());
        }
    }

    #[test]
    fn cone_axis_stays_outside_the_set(x in pt(2, 3.0)) {
        let o = unit_box();
        prop_assume!(o.boundary_distance(&x).is_some_and(|d| d >= 0.05) && !o.contains(&x));
        let q = SampledSet::new(o.clone(), inside_samples(&o, 11, 0.0).unwrap(), vec![]).unwrap();
        let c = assign_cone(&q, &x, DEFAULT_ALPHA, DEFAULT_DELTA_FRAC).unwrap();
        let s = if c.sign == ConeSign::Plus { 1.0 } else { -1.0 };
        for k in 0..=32 {
            let t = 2.0 * c.epsilon * k as f64 / 32.0;
            let mut y = c.apex.coords().to_vec();
            y[c.coord] += s * t;
            prop_assert!(!o.contains(&LinfPoint::new(y).unwrap()));
        }
        prop_assert!(q.inside().iter().all(|p| !c.contains(p).unwrap()));
        prop_assert!(c.contains(&x).unwrap());
    }

    #[test]
    fn assembled_system_is_sound_and_sharp(seed in any::<u64>()) {
        let mut r = generate::rng(seed);
        let o = generate::random_box(&mut r, 2).unwrap();
        let sample = inside_samples(&o, 9, 0.0).unwrap();
        let probes = generate::outside_points(&mut r, &o, -4.0, 4.0, 30, 0.3).unwrap();
        let q = SampledSet::new(o, sample, probes.clone()).unwrap();
        let a = assemble_system(&q, &probes, DEFAULT_ALPHA, DEFAULT_DELTA_FRAC).unwrap();
        for p in q.inside() {
            prop_assert!(a.system.membership(p).unwrap().is_inside());
        }
        for p in &probes {
            prop_assert!(!a.system.membership(p).unwrap().is_inside());
        }
    }
}

#[test]
fn slab_samples_cover_the_boundary() {
    let o = Oracle::Slab { coeffs: vec![1.0, 0.5], offset: 0.0, half_width: 0.5 };
    let s = inside_samples(&o, 11, 2.0).unwrap();
    let on_boundary = s.iter().filter(|p| o.boundary_distance(p).unwrap() < 1e-12).count();
    assert!(on_boundary >= 2 * 11 - 2);
    assert!(grid(2, -1.0, 1.0, 3).len() == 9);
}
