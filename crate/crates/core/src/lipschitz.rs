//! One-sided Lipschitz bound functions `ℝⁿ⁻¹ → ℝ ∪ {±∞}`.
//!
//! A finite bound is an envelope of generators: an upper bound is the pointwise
//! minimum of `value + shift + λ·‖y − anchor‖` (cones) and `value + shift +
//! λ·⟨w, y⟩` (affine pieces with `‖w‖₁ ≤ 1`), a lower bound the pointwise maximum
//! of `value + shift − λ·‖y − anchor‖` and the same affine pieces. The envelope
//! may additionally be clamped to `[floor, ceiling]`. Every operation keeps the
//! certified constant `λ` exact, so Lipschitz continuity holds by construction.
//! A dropped inequality is represented by [`BoundKind::NegInf`] (lower) or
//! [`BoundKind::PosInf`] (upper).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linf::{check_dims, dist_slices, LinfPoint};

/// Slack allowed on `‖w‖₁ ≤ 1` for affine generators.
const WEIGHT_SLACK: f64 = 1e-12;

/// Exact order certification is attempted up to this many generators per side.
pub const EXACT_ORDER_MAX_GENERATORS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    NegInf,
    PosInf,
    Envelope,
}

/// `value + shift ± λ‖y − anchor‖`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeGenerator {
    pub anchor: LinfPoint,
    pub value: f64,
    pub shift: f64,
}

/// `value + shift + λ⟨weights, y⟩` with `‖weights‖₁ ≤ 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineGenerator {
    pub weights: Vec<f64>,
    pub value: f64,
    pub shift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Generator {
    Cone(ConeGenerator),
    Affine(AffineGenerator),
}

impl Generator {
    pub fn cone(anchor: LinfPoint, value: f64, shift: f64) -> Self {
        Generator::Cone(ConeGenerator { anchor, value, shift })
    }

    pub fn affine(weights: Vec<f64>, value: f64, shift: f64) -> Self {
        Generator::Affine(AffineGenerator { weights, value, shift })
    }

    fn input_dim(&self) -> usize {
        match self {
            Generator::Cone(c) => c.anchor.dim(),
            Generator::Affine(a) => a.weights.len(),
        }
    }

    fn offset(&self) -> f64 {
        match self {
            Generator::Cone(c) => c.value + c.shift,
            Generator::Affine(a) => a.value + a.shift,
        }
    }

    fn values_mut(&mut self) -> (&mut f64, &mut f64) {
        match self {
            Generator::Cone(c) => (&mut c.value, &mut c.shift),
            Generator::Affine(a) => (&mut a.value, &mut a.shift),
        }
    }

    /// Evaluates at `y` where `y` is `x` with coordinate `skip` removed
    /// (`skip = None` means `x` is already the reduced point).
    #[inline]
    fn eval(&self, side: Side, lambda: f64, x: &[f64], skip: Option<usize>) -> f64 {
        match self {
            Generator::Cone(c) => {
                let d = match skip {
                    None => dist_slices(x, c.anchor.coords()),
                    Some(s) => reduced_dist(x, s, c.anchor.coords()),
                };
                match side {
                    Side::Upper => c.value + c.shift + lambda * d,
                    Side::Lower => c.value + c.shift - lambda * d,
                }
            }
            Generator::Affine(a) => {
                let dot = match skip {
                    None => x.iter().zip(&a.weights).map(|(u, w)| u * w).sum::<f64>(),
                    Some(s) => reduced_iter(x, s).zip(&a.weights).map(|(u, w)| u * w).sum(),
                };
                a.value + a.shift + lambda * dot
            }
        }
    }
}

#[inline]
fn reduced_iter(x: &[f64], skip: usize) -> impl Iterator<Item = &f64> {
    x.iter().enumerate().filter(move |&(j, _)| j != skip).map(|(_, v)| v)
}

#[inline]
fn reduced_dist(x: &[f64], skip: usize, anchor: &[f64]) -> f64 {
    reduced_iter(x, skip)
        .zip(anchor)
        .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct BoundRecord {
    kind: BoundKind,
    side: Side,
    #[serde(default)]
    lambda: f64,
    #[serde(default)]
    generators: Vec<Generator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ceiling: Option<f64>,
}

/// A one-sided λ-Lipschitz bound with `λ ≤ 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoundRecord", into = "BoundRecord")]
pub struct LipschitzBound {
    kind: BoundKind,
    side: Side,
    lambda: f64,
    generators: Vec<Generator>,
    floor: Option<f64>,
    ceiling: Option<f64>,
}

impl TryFrom<BoundRecord> for LipschitzBound {
    type Error = Error;

    fn try_from(r: BoundRecord) -> Result<Self> {
        match r.kind {
            BoundKind::NegInf if r.side == Side::Lower => Ok(Self::neg_inf()),
            BoundKind::PosInf if r.side == Side::Upper => Ok(Self::pos_inf()),
            BoundKind::NegInf | BoundKind::PosInf => Err(Error::invalid(format!(
                "{:?} is not a valid {:?} bound",
                r.kind, r.side
            ))),
            BoundKind::Envelope if r.generators.is_empty() => {
                if r.lambda != 0.0 {
                    return Err(Error::invalid("generator-free envelope must have lambda 0"));
                }
                Self {
                    kind: BoundKind::Envelope,
                    side: r.side,
                    lambda: 0.0,
                    generators: Vec::new(),
                    floor: None,
                    ceiling: None,
                }
                .with_clamp(r.floor, r.ceiling)
            }
            BoundKind::Envelope => {
                Self::envelope(r.side, r.lambda, r.generators)?.with_clamp(r.floor, r.ceiling)
            }
        }
    }
}

impl From<LipschitzBound> for BoundRecord {
    fn from(b: LipschitzBound) -> Self {
        BoundRecord {
            kind: b.kind,
            side: b.side,
            lambda: b.lambda,
            generators: b.generators,
            floor: b.floor,
            ceiling: b.ceiling,
        }
    }
}

impl LipschitzBound {
    /// The dropped lower inequality.
    pub fn neg_inf() -> Self {
        Self {
            kind: BoundKind::NegInf,
            side: Side::Lower,
            lambda: 0.0,
            generators: Vec::new(),
            floor: None,
            ceiling: None,
        }
    }

    /// The dropped upper inequality.
    pub fn pos_inf() -> Self {
        Self {
            kind: BoundKind::PosInf,
            side: Side::Upper,
            lambda: 0.0,
            generators: Vec::new(),
            floor: None,
            ceiling: None,
        }
    }

    pub fn dropped(side: Side) -> Self {
        match side {
            Side::Lower => Self::neg_inf(),
            Side::Upper => Self::pos_inf(),
        }
    }

    pub fn envelope(side: Side, lambda: f64, generators: Vec<Generator>) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid(format!("lambda must lie in [0, 1], got {lambda}")));
        }
        if generators.is_empty() {
            return Err(Error::invalid("envelope needs at least one generator"));
        }
        let dim = generators[0].input_dim();
        for g in &generators {
            check_dims(dim, g.input_dim())?;
            if !g.offset().is_finite() {
                return Err(Error::NonFinite("generator value/shift"));
            }
            if let Generator::Affine(a) = g {
                if a.weights.iter().any(|w| !w.is_finite()) {
                    return Err(Error::NonFinite("affine weights"));
                }
                let l1: f64 = a.weights.iter().map(|w| w.abs()).sum();
                if l1 > 1.0 + WEIGHT_SLACK {
                    return Err(Error::invalid(format!(
                        "affine weights must have l1 norm <= 1, got {l1}"
                    )));
                }
            }
        }
        Ok(Self {
            kind: BoundKind::Envelope,
            side,
            lambda,
            generators,
            floor: None,
            ceiling: None,
        })
    }

    /// The constant bound `c`.
    pub fn constant(side: Side, c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::NonFinite("constant bound"));
        }
        Ok(Self {
            kind: BoundKind::Envelope,
            side,
            lambda: 0.0,
            generators: Vec::new(),
            floor: Some(c),
            ceiling: Some(c),
        })
    }

    /// Single cone `value ± λ‖y − anchor‖`.
    pub fn cone(side: Side, lambda: f64, anchor: LinfPoint, value: f64) -> Result<Self> {
        Self::envelope(side, lambda, vec![Generator::cone(anchor, value, 0.0)])
    }

    /// The affine function `value + ⟨weights, y⟩`; requires `‖weights‖₁ ≤ 1`.
    pub fn affine(side: Side, weights: Vec<f64>, value: f64) -> Result<Self> {
        let l1: f64 = weights.iter().map(|w| w.abs()).sum();
        if l1 > 1.0 + WEIGHT_SLACK {
            return Err(Error::invalid(format!("affine bound has l1 slope {l1} > 1")));
        }
        if l1 == 0.0 {
            return Self::constant(side, value);
        }
        let unit = weights.iter().map(|w| w / l1).collect();
        Self::envelope(side, l1.min(1.0), vec![Generator::affine(unit, value, 0.0)])
    }

    /// Restricts the envelope's range to `[floor, ceiling]`, intersecting with
    /// any existing clamp.
    pub fn with_clamp(mut self, floor: Option<f64>, ceiling: Option<f64>) -> Result<Self> {
        if self.kind != BoundKind::Envelope {
            return Err(Error::invalid("only envelopes can carry a clamp"));
        }
        if floor.is_some_and(|f| !f.is_finite()) || ceiling.is_some_and(|c| !c.is_finite()) {
            return Err(Error::NonFinite("clamp"));
        }
        let floor = max_opt(self.floor, floor);
        let ceiling = min_opt(self.ceiling, ceiling);
        if let (Some(f), Some(c)) = (floor, ceiling) {
            if f > c {
                return Err(Error::invalid(format!("clamp floor {f} exceeds ceiling {c}")));
            }
        }
        if self.generators.is_empty() {
            // a generator-free envelope is a constant
            let missing = match self.side {
                Side::Upper => ceiling.is_none(),
                Side::Lower => floor.is_none(),
            };
            if missing {
                return Err(Error::invalid("generator-free envelope needs a finite clamp"));
            }
        }
        self.floor = floor;
        self.ceiling = ceiling;
        Ok(self)
    }

    pub fn kind(&self) -> BoundKind {
        self.kind
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn floor(&self) -> Option<f64> {
        self.floor
    }

    pub fn ceiling(&self) -> Option<f64> {
        self.ceiling
    }

    pub fn is_finite(&self) -> bool {
        self.kind == BoundKind::Envelope
    }

    /// Input dimension, when the bound has generators that fix it.
    pub fn input_dim(&self) -> Option<usize> {
        self.generators.first().map(Generator::input_dim)
    }

    /// Appends generators to an envelope of the same side.
    pub fn with_generators(mut self, extra: Vec<Generator>) -> Result<Self> {
        if self.kind != BoundKind::Envelope {
            return Err(Error::invalid("cannot add generators to an infinite bound"));
        }
        let (floor, ceiling) = (self.floor, self.ceiling);
        self.generators.extend(extra);
        Self::envelope(self.side, self.lambda, self.generators)?.with_clamp(floor, ceiling)
    }

    pub fn evaluate(&self, y: &LinfPoint) -> Result<f64> {
        if let Some(d) = self.input_dim() {
            check_dims(d, y.dim())?;
        }
        Ok(self.eval_raw(y.coords(), None))
    }

    /// Evaluates on `x` with coordinate `skip` removed, without allocating.
    #[inline]
    pub(crate) fn eval_skipping(&self, x: &[f64], skip: usize) -> f64 {
        self.eval_raw(x, Some(skip))
    }

    #[inline]
    fn eval_raw(&self, x: &[f64], skip: Option<usize>) -> f64 {
        match self.kind {
            BoundKind::NegInf => f64::NEG_INFINITY,
            BoundKind::PosInf => f64::INFINITY,
            BoundKind::Envelope => {
                let core = match self.side {
                    Side::Upper => self
                        .generators
                        .iter()
                        .map(|g| g.eval(self.side, self.lambda, x, skip))
                        .fold(f64::INFINITY, f64::min),
                    Side::Lower => self
                        .generators
                        .iter()
                        .map(|g| g.eval(self.side, self.lambda, x, skip))
                        .fold(f64::NEG_INFINITY, f64::max),
                };
                let mut v = core;
                if let Some(c) = self.ceiling {
                    v = v.min(c);
                }
                if let Some(f) = self.floor {
                    v = v.max(f);
                }
                v
            }
        }
    }

    /// `y ↦ b(y + input_offset) − output_offset`.
    pub fn translate(&self, input_offset: &[f64], output_offset: f64) -> Result<Self> {
        if self.kind != BoundKind::Envelope {
            return Ok(self.clone());
        }
        if let Some(d) = self.input_dim() {
            check_dims(d, input_offset.len())?;
        }
        let mut out = self.clone();
        for g in &mut out.generators {
            match g {
                Generator::Cone(c) => {
                    let shifted: Vec<f64> =
                        c.anchor.coords().iter().zip(input_offset).map(|(a, o)| a - o).collect();
                    c.anchor = LinfPoint::new(shifted)?;
                    c.value -= output_offset;
                }
                Generator::Affine(a) => {
                    let dot: f64 = a.weights.iter().zip(input_offset).map(|(w, o)| w * o).sum();
                    a.value += self.lambda * dot - output_offset;
                }
            }
        }
        out.floor = out.floor.map(|f| f - output_offset);
        out.ceiling = out.ceiling.map(|c| c - output_offset);
        Ok(out)
    }

    /// Applies the increasing affine map `v ↦ scale·v + offset` to the bound's
    /// values; the Lipschitz constant scales by `scale`.
    fn map_values(&self, scale: f64, offset: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&scale));
        let mut out = self.clone();
        out.lambda = self.lambda * scale;
        for g in &mut out.generators {
            let (value, shift) = g.values_mut();
            *value = scale * *value + offset;
            *shift *= scale;
        }
        out.floor = out.floor.map(|f| scale * f + offset);
        out.ceiling = out.ceiling.map(|c| scale * c + offset);
        out
    }
}

fn max_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// `y ↦ min{max{b(y), −R}, R}`, always a finite envelope.
pub fn clamp_to_radius(b: &LipschitzBound, radius: f64) -> Result<LipschitzBound> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("radius must be positive, got {radius}")));
    }
    match b.kind {
        BoundKind::NegInf => LipschitzBound::constant(Side::Lower, -radius),
        BoundKind::PosInf => LipschitzBound::constant(Side::Upper, radius),
        BoundKind::Envelope => {
            let clip = |v: f64| v.clamp(-radius, radius);
            let mut out = b.clone();
            out.floor = Some(clip(b.floor.unwrap_or(f64::NEG_INFINITY)));
            out.ceiling = Some(clip(b.ceiling.unwrap_or(f64::INFINITY)));
            Ok(out)
        }
    }
}

/// `λ_k = 1 − 1/k`.
pub fn shrink_factor(k: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("shrink stage k must be >= 1"));
    }
    Ok(1.0 - 1.0 / k as f64)
}

/// Pulls a bound clamped to `[−R, R]` towards `∓R` by `λ_k = 1 − 1/k`:
/// lower `λ_k(b + R) − R`, upper `λ_k(b − R) + R`.
pub fn shrink(b: &LipschitzBound, k: u64, radius: f64) -> Result<LipschitzBound> {
    let lk = shrink_factor(k)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("radius must be positive, got {radius}")));
    }
    let slack = 1e-12 * radius.max(1.0);
    let clamped = b.is_finite()
        && b.floor.is_some_and(|f| f >= -radius - slack)
        && b.ceiling.is_some_and(|c| c <= radius + slack);
    if !clamped {
        return Err(Error::invalid("shrink expects a bound clamped to [-R, R]"));
    }
    let offset = match b.side {
        Side::Lower => (lk - 1.0) * radius,
        Side::Upper => (1.0 - lk) * radius,
    };
    Ok(b.map_values(lk, offset))
}

/// Empirical Lipschitz certificate over sampled pairs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub pairs_checked: usize,
    pub lambda: f64,
    /// `max |b(y) − b(y′)| − λ‖y − y′‖` over the pairs (0 if none).
    pub worst_slack: f64,
    /// `max |b(y) − b(y′)| / ‖y − y′‖` over pairs with distinct points.
    pub worst_ratio: f64,
    pub violations: Vec<usize>,
}

impl LipschitzReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `|b(y) − b(y′)| ≤ λ‖y − y′‖ + tau` for every sampled pair, at the
/// bound's own `λ`.
pub fn certify_lipschitz(
    b: &LipschitzBound,
    pairs: &[(LinfPoint, LinfPoint)],
    tau: f64,
) -> Result<LipschitzReport> {
    certify_lipschitz_at(b, b.lambda, pairs, tau)
}

/// As [`certify_lipschitz`] but against a caller-chosen constant.
pub fn certify_lipschitz_at(
    b: &LipschitzBound,
    lambda: f64,
    pairs: &[(LinfPoint, LinfPoint)],
    tau: f64,
) -> Result<LipschitzReport> {
    let mut report = LipschitzReport {
        pairs_checked: pairs.len(),
        lambda,
        worst_slack: if pairs.is_empty() { 0.0 } else { f64::NEG_INFINITY },
        worst_ratio: 0.0,
        violations: Vec::new(),
    };
    for (k, (y, z)) in pairs.iter().enumerate() {
        let d = crate::linf::linf_dist(y, z)?;
        if !b.is_finite() {
            report.worst_slack = report.worst_slack.max(-lambda * d);
            continue;
        }
        let diff = (b.evaluate(y)? - b.evaluate(z)?).abs();
        let slack = diff - lambda * d;
        report.worst_slack = report.worst_slack.max(slack);
        if d > 0.0 {
            report.worst_ratio = report.worst_ratio.max(diff / d);
        }
        if slack > tau {
            report.violations.push(k);
        }
    }
    Ok(report)
}

/// A lower/upper pair for one coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    pub lower: LipschitzBound,
    pub upper: LipschitzBound,
}

impl BoundPair {
    pub fn new(lower: LipschitzBound, upper: LipschitzBound) -> Result<Self> {
        if lower.side != Side::Lower || upper.side != Side::Upper {
            return Err(Error::invalid("bound pair sides must be (lower, upper)"));
        }
        Ok(Self { lower, upper })
    }

    pub fn free() -> Self {
        Self { lower: LipschitzBound::neg_inf(), upper: LipschitzBound::pos_inf() }
    }

    /// Larger of the two certified constants.
    pub fn lambda(&self) -> f64 {
        self.lower.lambda.max(self.upper.lambda)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderReport {
    pub samples_checked: usize,
    /// `max lower(y) − upper(y)`; negative or zero when ordered.
    pub worst_violation: f64,
    pub violations: Vec<usize>,
    /// Whether the verdict is exact (generator comparison) rather than sampled.
    pub exact: bool,
}

impl OrderReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `lower(y) ≤ upper(y) + tau` on every sample.
pub fn certify_order(p: &BoundPair, samples: &[LinfPoint], tau: f64) -> Result<OrderReport> {
    let mut report = OrderReport {
        samples_checked: samples.len(),
        worst_violation: f64::NEG_INFINITY,
        violations: Vec::new(),
        exact: false,
    };
    for (k, y) in samples.iter().enumerate() {
        let lo = p.lower.evaluate(y)?;
        let hi = p.upper.evaluate(y)?;
        let gap = if lo == f64::NEG_INFINITY || hi == f64::INFINITY {
            f64::NEG_INFINITY
        } else {
            lo - hi
        };
        report.worst_violation = report.worst_violation.max(gap);
        if gap > tau {
            report.violations.push(k);
        }
    }
    Ok(report)
}

/// Exact order check by pairwise generator comparison.
///
/// Applies when neither side carries a clamp and each has at most
/// [`EXACT_ORDER_MAX_GENERATORS`] generators; returns `None` otherwise. The
/// reported violation is the supremum of `lower − upper` over all of `ℝⁿ⁻¹`
/// (possibly `+∞`); `violations` lists offending `(lower, upper)` generator
/// index pairs flattened as `lower * len(upper) + upper`.
pub fn certify_order_exact(p: &BoundPair, tau: f64) -> Option<OrderReport> {
    let (lo, up) = (&p.lower, &p.upper);
    let mut report = OrderReport {
        samples_checked: 0,
        worst_violation: f64::NEG_INFINITY,
        violations: Vec::new(),
        exact: true,
    };
    if lo.kind == BoundKind::NegInf || up.kind == BoundKind::PosInf {
        return Some(report);
    }
    let clamped = lo.floor.is_some() || lo.ceiling.is_some() || up.floor.is_some() || up.ceiling.is_some();
    if clamped
        || lo.generators.len() > EXACT_ORDER_MAX_GENERATORS
        || up.generators.len() > EXACT_ORDER_MAX_GENERATORS
    {
        return None;
    }
    for (a, g) in lo.generators.iter().enumerate() {
        for (b, h) in up.generators.iter().enumerate() {
            let sup = pair_sup(g, lo.lambda, h, up.lambda);
            report.worst_violation = report.worst_violation.max(sup);
            if sup > tau {
                report.violations.push(a * up.generators.len() + b);
            }
        }
    }
    Some(report)
}

/// `sup_y (g_lower(y) − h_upper(y))`.
fn pair_sup(g: &Generator, lg: f64, h: &Generator, lh: f64) -> f64 {
    let c = g.offset() - h.offset();
    match (g, h) {
        // −lg‖y−a‖ − lh‖y−b‖ peaks at an anchor
        (Generator::Cone(x), Generator::Cone(y)) => {
            c - lg.min(lh) * dist_slices(x.anchor.coords(), y.anchor.coords())
        }
        // −lg‖y−a‖ − lh⟨w,y⟩: bounded iff lh‖w‖₁ ≤ lg, then peaks at y = a
        (Generator::Cone(x), Generator::Affine(w)) => {
            if lh * l1(&w.weights) <= lg + 1e-15 {
                c - lh * dot(&w.weights, x.anchor.coords())
            } else {
                f64::INFINITY
            }
        }
        (Generator::Affine(w), Generator::Cone(y)) => {
            if lg * l1(&w.weights) <= lh + 1e-15 {
                c + lg * dot(&w.weights, y.anchor.coords())
            } else {
                f64::INFINITY
            }
        }
        (Generator::Affine(u), Generator::Affine(w)) => {
            let parallel = u
                .weights
                .iter()
                .zip(&w.weights)
                .all(|(a, b)| (lg * a - lh * b).abs() <= 1e-15);
            if parallel {
                c
            } else {
                f64::INFINITY
            }
        }
    }
}

fn l1(w: &[f64]) -> f64 {
    w.iter().map(|v| v.abs()).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(v: &[f64]) -> LinfPoint {
        LinfPoint::new(v.to_vec()).unwrap()
    }

    fn rand_point(rng: &mut ChaCha8Rng, n: usize, r: f64) -> LinfPoint {
        p(&(0..n).map(|_| rng.random_range(-r..r)).collect::<Vec<_>>())
    }

    fn rand_cone_bound(rng: &mut ChaCha8Rng, side: Side, n: usize, lambda: f64, gens: usize) -> LipschitzBound {
        let generators = (0..gens)
            .map(|_| Generator::cone(rand_point(rng, n, 3.0), rng.random_range(-2.0..2.0), rng.random_range(-0.5..0.5)))
            .collect();
        LipschitzBound::envelope(side, lambda, generators).unwrap()
    }

    #[test]
    fn single_cone_evaluates_to_norm() {
        let b = LipschitzBound::cone(Side::Upper, 1.0, p(&[0.0]), 0.0).unwrap();
        assert_eq!(b.evaluate(&p(&[3.0])).unwrap(), 3.0);
        assert_eq!(b.evaluate(&p(&[-3.0])).unwrap(), 3.0);
    }

    #[test]
    fn dropped_bounds_are_infinite() {
        assert_eq!(LipschitzBound::neg_inf().evaluate(&p(&[1.0, 2.0])).unwrap(), f64::NEG_INFINITY);
        assert_eq!(LipschitzBound::pos_inf().evaluate(&p(&[5.0])).unwrap(), f64::INFINITY);
    }

    #[test]
    fn two_generator_upper_is_min_of_cones() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a1, a2) = (rand_point(&mut rng, 2, 2.0), rand_point(&mut rng, 2, 2.0));
        let b = LipschitzBound::envelope(
            Side::Upper,
            0.7,
            vec![Generator::cone(a1.clone(), 0.5, -0.1), Generator::cone(a2.clone(), -0.3, 0.2)],
        )
        .unwrap();
        for _ in 0..50 {
            let y = rand_point(&mut rng, 2, 4.0);
            let c1 = 0.5 - 0.1 + 0.7 * crate::linf::linf_dist(&y, &a1).unwrap();
            let c2 = -0.3 + 0.2 + 0.7 * crate::linf::linf_dist(&y, &a2).unwrap();
            assert_eq!(b.evaluate(&y).unwrap(), c1.min(c2));
        }
    }

    #[test]
    fn envelope_validation() {
        assert!(LipschitzBound::envelope(Side::Upper, 1.5, vec![Generator::cone(p(&[0.0]), 0.0, 0.0)]).is_err());
        assert!(LipschitzBound::envelope(Side::Upper, 1.0, vec![]).is_err());
        assert!(LipschitzBound::envelope(
            Side::Upper,
            1.0,
            vec![Generator::cone(p(&[0.0]), 0.0, 0.0), Generator::cone(p(&[0.0, 1.0]), 0.0, 0.0)]
        )
        .is_err());
        assert!(LipschitzBound::affine(Side::Upper, vec![0.7, 0.7], 0.0).is_err());
        let bad: std::result::Result<LipschitzBound, _> =
            serde_json::from_str(r#"{"kind":"neg_inf","side":"upper"}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn evaluate_dimension_checked() {
        let b = LipschitzBound::cone(Side::Upper, 1.0, p(&[0.0, 0.0]), 0.0).unwrap();
        assert!(matches!(b.evaluate(&p(&[1.0])), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn skipping_matches_dropped_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b = rand_cone_bound(&mut rng, Side::Lower, 3, 0.9, 4)
            .with_generators(vec![Generator::affine(vec![0.2, -0.3, 0.5], 0.1, 0.0)])
            .unwrap();
        for _ in 0..30 {
            let x = rand_point(&mut rng, 4, 3.0);
            for i in 0..4 {
                let y = crate::linf::drop_coordinate(&x, i).unwrap();
                assert_eq!(b.eval_skipping(x.coords(), i), b.evaluate(&y).unwrap());
            }
        }
    }

    #[test]
    fn constant_bound_has_zero_slack() {
        let b = LipschitzBound::constant(Side::Upper, 2.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pairs: Vec<_> = (0..20).map(|_| (rand_point(&mut rng, 2, 5.0), rand_point(&mut rng, 2, 5.0))).collect();
        let r = certify_lipschitz(&b, &pairs, 1e-9).unwrap();
        assert!(r.passed());
        assert_eq!(r.worst_ratio, 0.0);
        assert!(r.worst_slack <= 0.0);
    }

    #[test]
    fn single_cone_certifies_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = rand_cone_bound(&mut rng, Side::Upper, 3, 1.0, 1);
        let pairs: Vec<_> = (0..100).map(|_| (rand_point(&mut rng, 3, 5.0), rand_point(&mut rng, 3, 5.0))).collect();
        let r = certify_lipschitz(&b, &pairs, 1e-9).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.worst_ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn clamp_examples() {
        let c = clamp_to_radius(&LipschitzBound::pos_inf(), 5.0).unwrap();
        assert_eq!(c.evaluate(&p(&[100.0])).unwrap(), 5.0);
        let c = clamp_to_radius(&LipschitzBound::neg_inf(), 5.0).unwrap();
        assert_eq!(c.evaluate(&p(&[100.0])).unwrap(), -5.0);
        let seven = LipschitzBound::constant(Side::Lower, 7.0).unwrap();
        assert_eq!(clamp_to_radius(&seven, 5.0).unwrap().evaluate(&p(&[0.0])).unwrap(), 5.0);
        assert!(clamp_to_radius(&seven, 0.0).is_err());
    }

    #[test]
    fn clamp_matches_pointwise_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = rand_cone_bound(&mut rng, Side::Upper, 2, 1.0, 1);
        let c = clamp_to_radius(&b, 2.0).unwrap();
        for _ in 0..50 {
            let y = rand_point(&mut rng, 2, 6.0);
            let expect = b.evaluate(&y).unwrap().max(-2.0).min(2.0);
            assert_eq!(c.evaluate(&y).unwrap(), expect);
        }
    }

    #[test]
    fn shrink_k1_collapses_to_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for side in [Side::Lower, Side::Upper] {
            let b = clamp_to_radius(&rand_cone_bound(&mut rng, side, 2, 1.0, 3), 3.0).unwrap();
            let s = shrink(&b, 1, 3.0).unwrap();
            assert_eq!(s.lambda(), 0.0);
            let expect = if side == Side::Lower { -3.0 } else { 3.0 };
            for _ in 0..10 {
                assert!((s.evaluate(&rand_point(&mut rng, 2, 5.0)).unwrap() - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn shrink_constant_zero() {
        let b = clamp_to_radius(&LipschitzBound::constant(Side::Lower, 0.0).unwrap(), 1.0).unwrap();
        for k in [2u64, 10, 1000, 1 << 20] {
            let s = shrink(&b, k, 1.0).unwrap();
            let v = s.evaluate(&p(&[0.3])).unwrap();
            assert!((v + 1.0 / k as f64).abs() < 1e-15, "k={k} v={v}");
        }
        assert!(shrink(&b, 0, 1.0).is_err());
        assert!(shrink(&LipschitzBound::neg_inf(), 2, 1.0).is_err());
    }

    #[test]
    fn shrink_matches_affine_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = 2.5;
        for side in [Side::Lower, Side::Upper] {
            let b = clamp_to_radius(&rand_cone_bound(&mut rng, side, 3, 1.0, 4), r).unwrap();
            let s = shrink(&b, 4, r).unwrap();
            assert!((s.lambda() - 0.75).abs() < 1e-15);
            for _ in 0..50 {
                let y = rand_point(&mut rng, 3, 5.0);
                let v = b.evaluate(&y).unwrap();
                let expect = match side {
                    Side::Lower => 0.75 * (v + r) - r,
                    Side::Upper => 0.75 * (v - r) + r,
                };
                let got = s.evaluate(&y).unwrap();
                assert!((got - expect).abs() < 1e-12);
                // −R ≤ s̲ᵏ ≤ s̲ and s̄ ≤ s̄ᵏ ≤ R
                match side {
                    Side::Lower => assert!(-r - 1e-12 <= got && got <= v + 1e-12),
                    Side::Upper => assert!(v - 1e-12 <= got && got <= r + 1e-12),
                }
            }
        }
    }

    #[test]
    fn shrunken_bound_certifies_at_lambda_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let b = clamp_to_radius(&rand_cone_bound(&mut rng, Side::Upper, 2, 1.0, 5), 4.0).unwrap();
        let s = shrink(&b, 2, 4.0).unwrap();
        let pairs: Vec<_> = (0..100).map(|_| (rand_point(&mut rng, 2, 5.0), rand_point(&mut rng, 2, 5.0))).collect();
        let r = certify_lipschitz_at(&s, 0.5, &pairs, 1e-12).unwrap();
        assert!(r.passed());
        assert!(r.worst_ratio <= 0.5 + 1e-12);
    }

    #[test]
    fn order_examples() {
        let up = LipschitzBound::cone(Side::Upper, 1.0, p(&[0.0]), 0.0).unwrap();
        let free = BoundPair::new(LipschitzBound::neg_inf(), up).unwrap();
        assert!(certify_order(&free, &[p(&[1.0]), p(&[-4.0])], 1e-9).unwrap().passed());
        assert!(certify_order_exact(&free, 1e-9).unwrap().passed());

        let bad = BoundPair::new(
            LipschitzBound::constant(Side::Lower, 1.0).unwrap(),
            LipschitzBound::constant(Side::Upper, 0.0).unwrap(),
        )
        .unwrap();
        let r = certify_order(&bad, &[p(&[0.0]), p(&[2.0])], 1e-9).unwrap();
        assert!(!r.passed());
        assert_eq!(r.worst_violation, 1.0);
        assert!(BoundPair::new(LipschitzBound::pos_inf(), LipschitzBound::pos_inf()).is_err());
    }

    #[test]
    fn exact_order_matches_anchor_sampling() {
        // For cone envelopes every pairwise supremum is attained at an anchor,
        // so sampling exactly at the anchors reproduces the exact value.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut verdicts = [0usize; 2];
        for _ in 0..60 {
            let (ll, lu) = (rng.random_range(0.2..1.0), rng.random_range(0.2..1.0));
            let lo = rand_cone_bound(&mut rng, Side::Lower, 2, ll, 3);
            let up = rand_cone_bound(&mut rng, Side::Upper, 2, lu, 3);
            let anchors: Vec<LinfPoint> = lo
                .generators()
                .iter()
                .chain(up.generators())
                .map(|g| match g {
                    Generator::Cone(c) => c.anchor.clone(),
                    Generator::Affine(_) => unreachable!(),
                })
                .collect();
            let pair = BoundPair::new(lo, up).unwrap();
            let exact = certify_order_exact(&pair, 1e-9).unwrap();
            let sampled = certify_order(&pair, &anchors, 1e-9).unwrap();
            assert!((exact.worst_violation - sampled.worst_violation).abs() < 1e-12);
            assert_eq!(exact.passed(), sampled.passed());
            verdicts[exact.passed() as usize] += 1;
        }
        assert!(verdicts[0] > 0 && verdicts[1] > 0, "{verdicts:?}");
    }

    #[test]
    fn adding_generators_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for side in [Side::Lower, Side::Upper] {
            let b = rand_cone_bound(&mut rng, side, 2, 1.0, 2);
            let extra = Generator::cone(rand_point(&mut rng, 2, 3.0), rng.random_range(-2.0..2.0), 0.0);
            let bigger = b.clone().with_generators(vec![extra]).unwrap();
            for _ in 0..50 {
                let y = rand_point(&mut rng, 2, 5.0);
                let (v, w) = (b.evaluate(&y).unwrap(), bigger.evaluate(&y).unwrap());
                match side {
                    Side::Upper => assert!(w <= v),
                    Side::Lower => assert!(w >= v),
                }
            }
        }
    }

    #[test]
    fn shrink_then_clamp_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let b = clamp_to_radius(&rand_cone_bound(&mut rng, Side::Lower, 2, 1.0, 3), 2.0).unwrap();
        let s = shrink(&b, 8, 2.0).unwrap();
        let c = clamp_to_radius(&s, 2.0).unwrap();
        for _ in 0..50 {
            let y = rand_point(&mut rng, 2, 5.0);
            assert_eq!(s.evaluate(&y).unwrap(), c.evaluate(&y).unwrap());
        }
    }

    #[test]
    fn translate_shifts_argument_and_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let b = rand_cone_bound(&mut rng, Side::Upper, 2, 0.6, 3)
            .with_generators(vec![Generator::affine(vec![0.5, -0.5], 0.2, 0.1)])
            .unwrap()
            .with_clamp(Some(-1.0), Some(2.0))
            .unwrap();
        let t = b.translate(&[0.4, -1.1], 0.7).unwrap();
        for _ in 0..50 {
            let y = rand_point(&mut rng, 2, 4.0);
            let shifted = p(&[y[0] + 0.4, y[1] - 1.1]);
            let expect = b.evaluate(&shifted).unwrap() - 0.7;
            assert!((t.evaluate(&y).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn serde_round_trip() {
        let b = LipschitzBound::envelope(
            Side::Upper,
            0.5,
            vec![Generator::cone(p(&[1.0, 2.0]), 3.0, -0.25), Generator::affine(vec![0.5, 0.0], 1.0, 0.0)],
        )
        .unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert!(s.contains(r#""kind":"envelope""#));
        let back: LipschitzBound = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
        let inf: LipschitzBound = serde_json::from_str(r#"{"kind":"pos_inf","side":"upper"}"#).unwrap();
        assert_eq!(inf, LipschitzBound::pos_inf());
    }
}
