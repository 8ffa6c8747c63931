//! Inequality systems `Q = { x : r̲ᵢ(x̂ᵢ) ≤ xᵢ ≤ r̄ᵢ(x̂ᵢ) }` and their retractions.
//!
//! The coordinate clamp `ρᵢ` replaces `xᵢ` by its value clamped between the two
//! bounds evaluated on the remaining coordinates. One sweep `T = ρ_{n−1} ∘ ⋯ ∘ ρ₀`
//! is a `λ`-contraction on successive differences when every bound is
//! `λ`-Lipschitz with `λ < 1`, so iterating it converges to a point of `Q`
//! ([`InjectiveSystem::retract_contractive`]).
//!
//! For 1-Lipschitz bounds [`InjectiveSystem::retract_schedule`] moves the
//! witness to the origin, clamps every bound to `[−R, R]`, shrinks it by
//! `λ_k = 1 − 1/k` for `k = 2, 4, 8, …`, and runs the contractive iteration on
//! each relaxed set `Q_k ⊇ Q ∩ B(0, R)`, warm-started from the previous stage.
//! Each stage output is then swept with the unshrunk clamped system until it
//! stops moving, which lands on `Q ∩ B(0, R)` without the `O(R/k)` gap the
//! relaxed sets leave.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linf::{check_dims, dist_slices, drop_coordinate, linf_dist, LinfPoint, MAX_DIM};
use crate::lipschitz::{clamp_to_radius, shrink, shrink_factor, BoundPair};
use crate::DEFAULT_GEOM_TOL;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Membership {
    Inside,
    Outside { coord: usize, violation: f64 },
}

impl Membership {
    pub fn is_inside(&self) -> bool {
        matches!(self, Membership::Inside)
    }
}

#[derive(Serialize, Deserialize)]
struct SystemRecord {
    dim: usize,
    witness: LinfPoint,
    pairs: Vec<BoundPair>,
}

/// A nonempty set described by one lower/upper bound pair per coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemRecord", into = "SystemRecord")]
pub struct InjectiveSystem {
    dim: usize,
    pairs: Vec<BoundPair>,
    witness: LinfPoint,
    geom_tol: f64,
}

impl TryFrom<SystemRecord> for InjectiveSystem {
    type Error = Error;

    fn try_from(r: SystemRecord) -> Result<Self> {
        check_dims(r.dim, r.pairs.len())?;
        InjectiveSystem::new(r.pairs, r.witness, DEFAULT_GEOM_TOL)
    }
}

impl From<InjectiveSystem> for SystemRecord {
    fn from(s: InjectiveSystem) -> Self {
        SystemRecord { dim: s.dim, witness: s.witness, pairs: s.pairs }
    }
}

impl InjectiveSystem {
    /// Validates dimensions and that `witness` lies in the set.
    pub fn new(pairs: Vec<BoundPair>, witness: LinfPoint, geom_tol: f64) -> Result<Self> {
        let dim = pairs.len();
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(Error::invalid(format!("system dimension must be in 2..={MAX_DIM}, got {dim}")));
        }
        if !(geom_tol >= 0.0 && geom_tol.is_finite()) {
            return Err(Error::invalid("geometric tolerance must be finite and >= 0"));
        }
        check_dims(dim, witness.dim())?;
        for p in &pairs {
            for b in [&p.lower, &p.upper] {
                if let Some(d) = b.input_dim() {
                    check_dims(dim - 1, d)?;
                }
            }
        }
        let s = Self { dim, pairs, witness, geom_tol };
        if let Membership::Outside { coord, violation } = s.membership(&s.witness)? {
            return Err(Error::invalid(format!(
                "witness violates coordinate {coord} by {violation:e}"
            )));
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pairs(&self) -> &[BoundPair] {
        &self.pairs
    }

    pub fn witness(&self) -> &LinfPoint {
        &self.witness
    }

    pub fn geom_tol(&self) -> f64 {
        self.geom_tol
    }

    pub fn with_geom_tol(mut self, geom_tol: f64) -> Self {
        self.geom_tol = geom_tol;
        self
    }

    /// Largest certified Lipschitz constant over the finite bounds.
    pub fn lambda(&self) -> f64 {
        self.pairs.iter().map(BoundPair::lambda).fold(0.0, f64::max)
    }

    /// `(r̲ᵢ(x̂ᵢ), r̄ᵢ(x̂ᵢ))`.
    pub fn bounds_at(&self, i: usize, x: &LinfPoint) -> Result<(f64, f64)> {
        check_dims(self.dim, x.dim())?;
        if i >= self.dim {
            return Err(Error::IndexOutOfRange { index: i, len: self.dim });
        }
        Ok(self.bounds_raw(i, x.coords()))
    }

    #[inline]
    fn bounds_raw(&self, i: usize, x: &[f64]) -> (f64, f64) {
        let p = &self.pairs[i];
        (p.lower.eval_skipping(x, i), p.upper.eval_skipping(x, i))
    }

    /// Coordinate and size of the largest violated inequality (0 when inside).
    pub fn max_violation(&self, x: &LinfPoint) -> Result<(usize, f64)> {
        check_dims(self.dim, x.dim())?;
        let mut worst = (0, 0.0);
        for i in 0..self.dim {
            let (lo, hi) = self.bounds_raw(i, x.coords());
            let v = (lo - x[i]).max(x[i] - hi);
            if v > worst.1 {
                worst = (i, v);
            }
        }
        Ok(worst)
    }

    pub fn membership(&self, x: &LinfPoint) -> Result<Membership> {
        self.membership_within(x, self.geom_tol)
    }

    /// Membership with every inequality relaxed by `tol`.
    pub fn membership_within(&self, x: &LinfPoint, tol: f64) -> Result<Membership> {
        let (coord, violation) = self.max_violation(x)?;
        Ok(if violation <= tol {
            Membership::Inside
        } else {
            Membership::Outside { coord, violation }
        })
    }

    /// The coordinate clamp `ρᵢ`.
    pub fn rho(&self, i: usize, x: &LinfPoint) -> Result<LinfPoint> {
        check_dims(self.dim, x.dim())?;
        if i >= self.dim {
            return Err(Error::IndexOutOfRange { index: i, len: self.dim });
        }
        let mut v = x.coords().to_vec();
        self.rho_in_place(i, &mut v)?;
        Ok(LinfPoint::from_vec_unchecked(v))
    }

    #[inline]
    fn rho_in_place(&self, i: usize, x: &mut [f64]) -> Result<()> {
        let (lo, hi) = self.bounds_raw(i, x);
        if lo > hi + self.geom_tol {
            return Err(Error::InconsistentBounds { coord: i, lower: lo, upper: hi });
        }
        x[i] = x[i].max(lo).min(hi);
        Ok(())
    }

    /// One sweep of clamps in `order` (ascending when `None`).
    pub fn cycle(&self, x: &LinfPoint, order: Option<&[usize]>) -> Result<LinfPoint> {
        check_dims(self.dim, x.dim())?;
        let order = resolve_order(self.dim, order)?;
        let mut v = x.coords().to_vec();
        self.cycle_in_place(&mut v, &order)?;
        Ok(LinfPoint::from_vec_unchecked(v))
    }

    fn cycle_in_place(&self, x: &mut [f64], order: &[usize]) -> Result<()> {
        for &i in order {
            self.rho_in_place(i, x)?;
        }
        Ok(())
    }

    /// Iterates the sweep until the residual drops below `tol·(1 − λ)`.
    ///
    /// Requires every finite bound to be λ-Lipschitz with `λ < 1`; the returned
    /// point is then within `tol` of the limit.
    pub fn retract_contractive(
        &self,
        x: &LinfPoint,
        cfg: &RetractConfig,
    ) -> Result<(LinfPoint, RetractionTrace)> {
        check_dims(self.dim, x.dim())?;
        cfg.validate()?;
        let lambda = self.lambda();
        if lambda >= 1.0 {
            return Err(Error::invalid(format!(
                "system has lambda = {lambda}; contractive retraction needs lambda < 1 (use the schedule)"
            )));
        }
        let order = resolve_order(self.dim, cfg.order.as_deref())?;
        let mut trace = RetractionTrace::new(lambda);
        trace.iterates.push(x.clone());
        let mut v = x.coords().to_vec();
        let converged = self.iterate(&mut v, &order, cfg.tol * (1.0 - lambda), cfg.max_iter, &mut trace, true)?;
        if !converged {
            return Err(Error::RetractionDiverged { trace: Box::new(trace) });
        }
        Ok((LinfPoint::from_vec_unchecked(v), trace))
    }

    /// Sweeps until the residual is at most `threshold`; returns whether it got
    /// there within `max_iter` sweeps.
    fn iterate(
        &self,
        v: &mut Vec<f64>,
        order: &[usize],
        threshold: f64,
        max_iter: usize,
        trace: &mut RetractionTrace,
        keep_iterates: bool,
    ) -> Result<bool> {
        let mut prev = v.clone();
        for _ in 0..max_iter {
            self.cycle_in_place(v, order)?;
            let res = dist_slices(v, &prev);
            trace.residuals.push(res);
            if keep_iterates {
                trace.iterates.push(LinfPoint::from_vec_unchecked(v.clone()));
            }
            if res <= threshold {
                return Ok(true);
            }
            prev.copy_from_slice(v);
        }
        Ok(false)
    }

    /// The frame used by the shrinkage schedule for a query point `x`: origin at
    /// the witness and `R = 2·max(‖x − witness‖, 1)`.
    pub fn schedule_frame(&self, x: &LinfPoint) -> Result<ScheduleFrame> {
        check_dims(self.dim, x.dim())?;
        let local = x.sub(&self.witness)?;
        let radius = 2.0 * local.norm().max(1.0);
        self.schedule_frame_with_radius(radius)
    }

    pub fn schedule_frame_with_radius(&self, radius: f64) -> Result<ScheduleFrame> {
        let w = self.witness.coords();
        let mut pairs = Vec::with_capacity(self.dim);
        for (i, p) in self.pairs.iter().enumerate() {
            let w_hat = drop_coordinate(&self.witness, i)?.into_vec();
            let lower = clamp_to_radius(&p.lower.translate(&w_hat, w[i])?, radius)?;
            let upper = clamp_to_radius(&p.upper.translate(&w_hat, w[i])?, radius)?;
            pairs.push(BoundPair::new(lower, upper)?);
        }
        let clamped = InjectiveSystem::new(pairs, LinfPoint::zeros(self.dim), self.geom_tol)?;
        Ok(ScheduleFrame { origin: self.witness.clone(), radius, clamped })
    }

    /// Approximate 1-Lipschitz retraction for bounds with `λ ≤ 1`.
    pub fn retract_schedule(
        &self,
        x: &LinfPoint,
        cfg: &RetractConfig,
    ) -> Result<(LinfPoint, RetractionTrace)> {
        cfg.validate()?;
        if cfg.k_max < 4 {
            return Err(Error::invalid("k_max must allow at least the stages k = 2 and k = 4"));
        }
        let order = resolve_order(self.dim, cfg.order.as_deref())?;
        let frame = match cfg.radius {
            Some(r) => {
                check_dims(self.dim, x.dim())?;
                self.schedule_frame_with_radius(r)?
            }
            None => self.schedule_frame(x)?,
        };
        let inner_tol = cfg.tol / 4.0;
        let mut trace = RetractionTrace::new(1.0);
        let mut current = frame.to_local(x)?.into_vec();
        let mut prev_out: Option<Vec<f64>> = None;
        trace.iterates.push(x.clone());

        let mut k: u64 = 2;
        while k <= cfg.k_max {
            let stage = frame.stage(k)?;
            let lambda = stage.lambda();
            let first = trace.residuals.len();
            let ok = stage.iterate(&mut current, &order, inner_tol * (1.0 - lambda), cfg.max_iter, &mut trace, false)?;
            let inner = trace.residuals.len() - first;
            let mut polished = current.clone();
            let ok = ok && frame.clamped.iterate(&mut polished, &order, inner_tol, cfg.max_iter, &mut trace, false)?;
            let polish = trace.residuals.len() - first - inner;
            let delta = prev_out.as_ref().map(|p| dist_slices(p, &polished));
            trace.schedule.push(Stage {
                k,
                radius: frame.radius,
                lambda,
                first_residual: first,
                iterations: inner,
                polish_iterations: polish,
                output_delta: delta,
            });
            let global = frame.to_global(&LinfPoint::from_vec_unchecked(polished.clone()))?;
            trace.iterates.push(global.clone());
            if !ok {
                return Err(Error::RetractionDiverged { trace: Box::new(trace) });
            }
            if delta.is_some_and(|d| d <= cfg.tol) {
                if !self.membership_within(&global, 2.0 * cfg.tol)?.is_inside() {
                    return Err(Error::RetractionDiverged { trace: Box::new(trace) });
                }
                return Ok((global, trace));
            }
            prev_out = Some(polished);
            k = k.saturating_mul(2);
        }
        Err(Error::RetractionDiverged { trace: Box::new(trace) })
    }

    /// Contractive retraction when `λ < 1`, otherwise the schedule.
    pub fn retract(&self, x: &LinfPoint, cfg: &RetractConfig) -> Result<(LinfPoint, RetractionTrace)> {
        match RetractMethod::for_system(self) {
            RetractMethod::Contractive => self.retract_contractive(x, cfg),
            RetractMethod::Schedule => self.retract_schedule(x, cfg),
        }
    }

    pub fn retract_with(
        &self,
        method: RetractMethod,
        x: &LinfPoint,
        cfg: &RetractConfig,
    ) -> Result<(LinfPoint, RetractionTrace)> {
        match method {
            RetractMethod::Contractive => self.retract_contractive(x, cfg),
            RetractMethod::Schedule => self.retract_schedule(x, cfg),
        }
    }
}

fn resolve_order(dim: usize, order: Option<&[usize]>) -> Result<Vec<usize>> {
    match order {
        None => Ok((0..dim).collect()),
        Some(o) => {
            let mut seen = vec![false; dim];
            if o.len() != dim {
                return Err(Error::invalid(format!("order must list {dim} coordinates, got {}", o.len())));
            }
            for &i in o {
                if i >= dim || seen[i] {
                    return Err(Error::invalid(format!("order {o:?} is not a permutation of 0..{dim}")));
                }
                seen[i] = true;
            }
            Ok(o.to_vec())
        }
    }
}

/// Witness-centred, radius-clamped copy of a system and its shrunken stages.
#[derive(Clone, Debug)]
pub struct ScheduleFrame {
    origin: LinfPoint,
    radius: f64,
    clamped: InjectiveSystem,
}

impl ScheduleFrame {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn origin(&self) -> &LinfPoint {
        &self.origin
    }

    /// `P = Q ∩ B(0, R)` in local coordinates.
    pub fn clamped(&self) -> &InjectiveSystem {
        &self.clamped
    }

    /// `Q_k` in local coordinates; its bounds are `λ_k`-Lipschitz.
    pub fn stage(&self, k: u64) -> Result<InjectiveSystem> {
        shrink_factor(k)?;
        let pairs = self
            .clamped
            .pairs
            .iter()
            .map(|p| {
                BoundPair::new(shrink(&p.lower, k, self.radius)?, shrink(&p.upper, k, self.radius)?)
            })
            .collect::<Result<Vec<_>>>()?;
        InjectiveSystem::new(pairs, LinfPoint::zeros(self.clamped.dim), self.clamped.geom_tol)
    }

    pub fn to_local(&self, x: &LinfPoint) -> Result<LinfPoint> {
        x.sub(&self.origin)
    }

    pub fn to_global(&self, x: &LinfPoint) -> Result<LinfPoint> {
        x.add(&self.origin)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RetractMethod {
    Contractive,
    Schedule,
}

impl RetractMethod {
    pub fn for_system(s: &InjectiveSystem) -> Self {
        if s.lambda() < 1.0 {
            RetractMethod::Contractive
        } else {
            RetractMethod::Schedule
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetractConfig {
    pub tol: f64,
    /// Sweep cap per fixed-point run.
    pub max_iter: usize,
    /// Largest shrinkage stage `k`.
    pub k_max: u64,
    pub order: Option<Vec<usize>>,
    /// Schedule radius `R`; derived from each query point when `None`.
    pub radius: Option<f64>,
}

impl Default for RetractConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 1_000_000, k_max: 1 << 14, order: None, radius: None }
    }
}

impl RetractConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        if self.radius.is_some_and(|r| !(r >= 1.0 && r.is_finite())) {
            return Err(Error::invalid("schedule radius must be finite and >= 1"));
        }
        Ok(())
    }
}

/// One stage of the shrinkage schedule.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stage {
    pub k: u64,
    pub radius: f64,
    pub lambda: f64,
    /// Index of this stage's first entry in [`RetractionTrace::residuals`].
    pub first_residual: usize,
    pub iterations: usize,
    pub polish_iterations: usize,
    /// Distance to the previous stage's output.
    pub output_delta: Option<f64>,
}

/// Residual history of a retraction run.
///
/// For the contractive path `iterates` holds every sweep; for the schedule it
/// holds the input followed by one output per stage.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RetractionTrace {
    pub iterates: Vec<LinfPoint>,
    pub residuals: Vec<f64>,
    pub lambda_used: f64,
    pub schedule: Vec<Stage>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub residual: f64,
    pub stage: Option<u64>,
}

impl RetractionTrace {
    fn new(lambda_used: f64) -> Self {
        Self { iterates: Vec::new(), residuals: Vec::new(), lambda_used, schedule: Vec::new() }
    }

    /// Flattened `(iteration, residual, stage k)` records; iteration restarts at
    /// 1 for every stage and for its polishing sweeps.
    pub fn records(&self) -> Vec<TraceRecord> {
        if self.schedule.is_empty() {
            return self
                .residuals
                .iter()
                .enumerate()
                .map(|(m, &r)| TraceRecord { iteration: m + 1, residual: r, stage: None })
                .collect();
        }
        let mut out = Vec::with_capacity(self.residuals.len());
        for s in &self.schedule {
            let inner = &self.residuals[s.first_residual..s.first_residual + s.iterations];
            let polish = &self.residuals[s.first_residual + s.iterations..s.first_residual + s.iterations + s.polish_iterations];
            for run in [inner, polish] {
                out.extend(run.iter().enumerate().map(|(m, &r)| TraceRecord {
                    iteration: m + 1,
                    residual: r,
                    stage: Some(s.k),
                }));
            }
        }
        out
    }

    /// Writes [`Self::records`] as JSON lines.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in self.records() {
            serde_json::to_writer(&mut w, &r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RetractionReport {
    pub method: RetractMethod,
    pub pairs_checked: usize,
    /// `max ‖ρ(x) − ρ(y)‖ − ‖x − y‖`.
    pub worst_expansion: f64,
    /// `max ‖ρ(q) − q‖` over pair members that lie in `Q`.
    pub worst_idempotence: f64,
    pub members_checked: usize,
    /// Pair indices that failed a check or whose retraction errored.
    pub failures: Vec<usize>,
    pub errors: Vec<String>,
}

impl RetractionReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks `‖ρ(x) − ρ(y)‖ ≤ ‖x − y‖ + 4·tol` and `ρ(q) = q` (within `tol`) for
/// members `q` of `Q`, retracting with `method` (or the applicable one).
///
/// The schedule runs with one radius for all pairs, `cfg.radius` or else twice
/// the largest distance from the witness, so every point sees the same map.
pub fn certify_retraction(
    s: &InjectiveSystem,
    pairs: &[(LinfPoint, LinfPoint)],
    cfg: &RetractConfig,
    method: Option<RetractMethod>,
) -> Result<RetractionReport> {
    let method = method.unwrap_or_else(|| RetractMethod::for_system(s));
    let mut reach: f64 = 1.0;
    for (x, y) in pairs {
        check_dims(s.dim(), x.dim())?;
        check_dims(s.dim(), y.dim())?;
        reach = reach.max(linf_dist(x, s.witness())?).max(linf_dist(y, s.witness())?);
    }
    let mut cfg = cfg.clone();
    if method == RetractMethod::Schedule && cfg.radius.is_none() {
        cfg.radius = Some(2.0 * reach);
    }
    let cfg = &cfg;
    struct Outcome {
        expansion: f64,
        idempotence: Option<f64>,
        members: usize,
        error: Option<String>,
        failed: bool,
    }
    let outcomes: Vec<Outcome> = pairs
        .par_iter()
        .map(|(x, y)| {
            let run = || -> Result<(f64, Option<f64>, usize)> {
                let (rx, _) = s.retract_with(method, x, cfg)?;
                let (ry, _) = s.retract_with(method, y, cfg)?;
                let expansion = linf_dist(&rx, &ry)? - linf_dist(x, y)?;
                let mut idem: Option<f64> = None;
                let mut members = 0;
                for (p, rp) in [(x, &rx), (y, &ry)] {
                    if s.membership(p)?.is_inside() {
                        members += 1;
                        let e = linf_dist(p, rp)?;
                        idem = Some(idem.map_or(e, |m| m.max(e)));
                    }
                }
                Ok((expansion, idem, members))
            };
            match run() {
                Ok((expansion, idempotence, members)) => Outcome {
                    expansion,
                    idempotence,
                    members,
                    error: None,
                    failed: expansion > 4.0 * cfg.tol || idempotence.is_some_and(|e| e > cfg.tol),
                },
                Err(e) => Outcome {
                    expansion: f64::NAN,
                    idempotence: None,
                    members: 0,
                    error: Some(e.to_string()),
                    failed: true,
                },
            }
        })
        .collect();

    let mut report = RetractionReport {
        method,
        pairs_checked: pairs.len(),
        worst_expansion: f64::NEG_INFINITY,
        worst_idempotence: 0.0,
        members_checked: 0,
        failures: Vec::new(),
        errors: Vec::new(),
    };
    for (k, o) in outcomes.into_iter().enumerate() {
        if o.expansion.is_finite() {
            report.worst_expansion = report.worst_expansion.max(o.expansion);
        }
        if let Some(e) = o.idempotence {
            report.worst_idempotence = report.worst_idempotence.max(e);
        }
        report.members_checked += o.members;
        if o.failed {
            report.failures.push(k);
        }
        if let Some(e) = o.error {
            report.errors.push(format!("pair {k}: {e}"));
        }
    }
    Ok(report)
}
