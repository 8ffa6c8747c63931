use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use hkit_core::characterization::{
    agreement, assemble_system, certify_disjoint_cones, MembershipOracle, Oracle, SampledSet,
};
use hkit_core::generate::{self, grid};
use hkit_core::hyperplane::{injective_kernel, kernel_bounds, nonhyperconvex_witness, Functional};
use hkit_core::isbell::{
    extremalize, in_delta, is_extremal, kuratowski_embed, star, validate_metric, FiniteMetricSpace, HullFunction,
};
use hkit_core::retraction::{InjectiveSystem, RetractMethod};
use hkit_core::{Error, LinfPoint};

use crate::io::{read_json, to_pretty, write_atomic, write_json};
use crate::workspace::Workspace;
use crate::{CliError, Form, Kind, Outcome};

#[derive(Deserialize)]
struct RawMetric {
    n: usize,
    dist: Vec<Vec<f64>>,
}

pub fn check_metric(ws: &Workspace, file: &Path) -> Result<Outcome, CliError> {
    let raw: RawMetric = read_json(file, "metric")?;
    if raw.n != raw.dist.len() {
        return Err(CliError::Usage(format!("metric file: n = {} but dist has {} rows", raw.n, raw.dist.len())));
    }
    let r = validate_metric(&raw.dist, ws.geom_tol);
    Ok(Outcome { positive: r.is_metric(), report: json!({ "command": "check-metric", "metric": r }) })
}

fn load_metric(ws: &Workspace, file: &Path) -> Result<FiniteMetricSpace, CliError> {
    let raw: RawMetric = read_json(file, "metric")?;
    if raw.n != raw.dist.len() {
        return Err(CliError::Usage(format!("metric file: n = {} but dist has {} rows", raw.n, raw.dist.len())));
    }
    Ok(FiniteMetricSpace::new(raw.dist, ws.geom_tol)?)
}

pub fn hull(
    ws: &Workspace,
    file: &Path,
    base: usize,
    function: Option<&Path>,
    extremalize_it: bool,
) -> Result<Outcome, CliError> {
    let m = load_metric(ws, file)?;
    let embedding = kuratowski_embed(&m, base)?;
    let mut distortion: f64 = 0.0;
    for x in 0..m.n_points() {
        for y in 0..m.n_points() {
            let d = hkit_core::linf::linf_dist(&embedding[x], &embedding[y])?;
            distortion = distortion.max((d - m.dist(x, y)).abs());
        }
    }
    let mut distance_functions = Vec::new();
    for x in 0..m.n_points() {
        let e = is_extremal(&m, &m.distance_function(x)?, ws.tol)?;
        distance_functions.push(json!({ "point": x, "extremality": e }));
    }
    let mut report = json!({
        "command": "hull",
        "n": m.n_points(),
        "base": base,
        "embedding": embedding,
        "embedding_distortion": distortion,
        "distance_functions": distance_functions,
    });
    let mut positive = true;
    if let Some(path) = function {
        let f: HullFunction = read_json(path, "function")?;
        let delta = in_delta(&m, &f)?;
        let s = star(&m, &f)?;
        let e = is_extremal(&m, &f, ws.tol)?;
        let mut fr = json!({ "values": f, "delta": delta, "star": s, "extremality": e });
        if extremalize_it {
            if !delta.member {
                return Err(CliError::Usage("function is not in Delta(X); cannot extremalize".into()));
            }
            let g = extremalize(&m, &f, ws.tol, ws.max_iter)?;
            let check = is_extremal(&m, &g.function, ws.tol)?;
            positive = check.extremal;
            fr["extremalized"] = json!({
                "values": g.function,
                "iterations": g.iterations,
                "final_residual": g.residuals.last(),
                "extremality": check,
            });
        } else {
            positive = e.extremal;
        }
        report["function"] = fr;
    }
    Ok(Outcome { report, positive })
}

pub fn retract(
    ws: &Workspace,
    system_path: &Path,
    point: Vec<f64>,
    force_schedule: bool,
    trace_path: Option<&Path>,
) -> Result<Outcome, CliError> {
    let system: InjectiveSystem = read_json::<InjectiveSystem>(system_path, "system")?.with_geom_tol(ws.geom_tol);
    if point.is_empty() {
        return Err(CliError::Usage("--point is required".into()));
    }
    let x = LinfPoint::new(point)?;
    let method = if force_schedule { RetractMethod::Schedule } else { RetractMethod::for_system(&system) };
    let cfg = ws.retract_config();
    match system.retract_with(method, &x, &cfg) {
        Ok((q, trace)) => {
            if let Some(p) = trace_path {
                let mut buf = Vec::new();
                trace.write_jsonl(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
                write_atomic(p, &buf)?;
            }
            let membership = system.membership_within(&q, 2.0 * ws.tol)?;
            Ok(Outcome {
                positive: true,
                report: json!({
                    "command": "retract",
                    "method": method,
                    "lambda": system.lambda(),
                    "point": x,
                    "fixed_point": q,
                    "sweeps": trace.residuals.len(),
                    "final_residual": trace.residuals.last(),
                    "stages": trace.schedule,
                    "inside": membership.is_inside(),
                }),
            })
        }
        Err(Error::RetractionDiverged { trace }) => {
            let p: PathBuf = match trace_path {
                Some(p) => p.to_path_buf(),
                None => {
                    let mut s = system_path.as_os_str().to_owned();
                    s.push(".trace.jsonl");
                    PathBuf::from(s)
                }
            };
            let mut buf = Vec::new();
            trace.write_jsonl(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
            write_atomic(&p, &buf)?;
            Err(CliError::Compute(format!(
                "retraction did not converge after {} sweeps; trace written to {}",
                trace.residuals.len(),
                p.display()
            )))
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum OracleRef {
    Inline(Oracle),
    /// `system:<path>`, relative to the samples file.
    Reference(String),
}

#[derive(Serialize, Deserialize)]
pub struct SamplesDoc {
    oracle: OracleRef,
    inside: Vec<LinfPoint>,
    #[serde(default)]
    outside: Vec<LinfPoint>,
}

fn resolve_oracle(r: OracleRef, samples_path: &Path, ws: &Workspace) -> Result<Oracle, CliError> {
    match r {
        OracleRef::Inline(o) => Ok(o),
        OracleRef::Reference(s) => {
            let rel = s
                .strip_prefix("system:")
                .ok_or_else(|| CliError::Usage(format!("unknown oracle {s:?}; expected an object or \"system:<file>\"")))?;
            let base = samples_path.parent().unwrap_or(Path::new("."));
            let system: InjectiveSystem = read_json(&base.join(rel), "system")?;
            Ok(Oracle::System { system: Box::new(system.with_geom_tol(ws.geom_tol)) })
        }
    }
}

/// Held-out grid over the samples' bounding box, widened by a quarter of its
/// extent on each side; at most about 10⁴ points.
fn held_out_grid(points: &[LinfPoint], n: usize) -> Vec<LinfPoint> {
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for p in points {
        for i in 0..n {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let k = ((10_000f64).powf(1.0 / n as f64).floor() as usize).clamp(2, 21);
    let unit = grid(n, 0.0, 1.0, k);
    unit.into_iter()
        .map(|u| {
            let c = (0..n)
                .map(|i| {
                    let w = (hi[i] - lo[i]).max(1e-3);
                    lo[i] - 0.25 * w + 1.5 * w * u[i]
                })
                .collect();
            LinfPoint::new(c).expect("finite grid")
        })
        .collect()
}

pub fn characterize(
    ws: &Workspace,
    samples_path: &Path,
    probes_path: &Path,
    out: &Path,
    records: Option<&Path>,
) -> Result<Outcome, CliError> {
    let doc: SamplesDoc = read_json(samples_path, "samples")?;
    let oracle = resolve_oracle(doc.oracle, samples_path, ws)?;
    let set = SampledSet::new(oracle, doc.inside, doc.outside)?;
    let probes: Vec<LinfPoint> = read_json(probes_path, "probes")?;
    let assembly = match assemble_system(&set, &probes, ws.alpha, ws.delta_frac) {
        Ok(a) => a,
        Err(Error::ConeConstruction { probe, witness }) => {
            return Err(CliError::Compute(format!(
                "cone construction failed: the cone of probe {probe} contains {witness}"
            )))
        }
        Err(e) => return Err(e.into()),
    };
    let system = assembly.system.clone();
    let inside_kept = set.inside().iter().filter(|p| system.contains(p)).count();
    let probes_excluded = assembly.assignments.iter().filter(|a| !system.contains(&a.x)).count();
    let disjoint = certify_disjoint_cones(&assembly.assignments)?;
    let mut all: Vec<LinfPoint> = set.inside().to_vec();
    all.extend(probes.iter().cloned());
    let held_out = agreement(&system, &set.oracle, &held_out_grid(&all, set.dim()))?;
    let max_eps = assembly.assignments.iter().map(|a| a.epsilon).fold(0.0, f64::max);

    let positive = inside_kept == set.inside().len()
        && probes_excluded == assembly.assignments.len()
        && disjoint.passed();
    let recs: Vec<_> = assembly.assignments.iter().map(|a| a.record()).collect();
    write_json(out, &system)?;
    if let Some(path) = records {
        let mut buf = Vec::new();
        for r in &recs {
            serde_json::to_writer(&mut buf, r).map_err(|e| CliError::Compute(e.to_string()))?;
            buf.push(b'\n');
        }
        write_atomic(path, &buf)?;
    }
    Ok(Outcome {
        positive,
        report: json!({
            "command": "characterize",
            "sample_size": set.inside().len(),
            "probes": probes.len(),
            "probes_skipped_inside": assembly.skipped,
            "alpha": ws.alpha,
            "max_epsilon": max_eps,
            "inside_kept": inside_kept,
            "probes_excluded": probes_excluded,
            "disjoint_cones": disjoint,
            "held_out": held_out,
            "band": 2.0 * ws.alpha * max_eps,
            "system": out,
        }),
    })
}

pub fn hyperplane(ws: &Workspace, coeffs: Vec<f64>, witness: Option<Vec<f64>>) -> Result<Outcome, CliError> {
    if coeffs.is_empty() {
        return Err(CliError::Usage("--coeffs is required".into()));
    }
    let phi = Functional::new(coeffs)?;
    let mut report = json!({
        "command": "hyperplane",
        "coeffs": phi,
        "norm_l1": phi.norm_l1(),
        "norm_linf": phi.norm_linf(),
    });
    match injective_kernel(&phi) {
        Some(i) => {
            let k = kernel_bounds(&phi, i)?;
            report["injective"] = json!(true);
            report["coord"] = json!(i);
            report["weights"] = json!(k.weights);
            Ok(Outcome { report, positive: true })
        }
        None => {
            let p = witness.map(LinfPoint::new).transpose()?;
            let w = nonhyperconvex_witness(&phi, p.as_ref(), ws.geom_tol)?;
            report["injective"] = json!(false);
            report["witness"] = json!(w);
            Ok(Outcome { report, positive: false })
        }
    }
}

pub fn generate(
    ws: &Workspace,
    kind: Kind,
    dim: usize,
    lambda: f64,
    form: Form,
    out: Option<&Path>,
) -> Result<Outcome, CliError> {
    let mut r = generate::rng(ws.seed);
    if form != Form::System && !matches!(kind, Kind::Box | Kind::Slab) {
        return Err(CliError::Usage("--as samples/probes applies to box and slab only".into()));
    }
    let doc = match kind {
        Kind::MetricShortestPath => serde_json::to_value(generate::shortest_path_metric(&mut r, dim)?),
        Kind::Functional => serde_json::to_value(generate::random_functional(&mut r, dim)?),
        Kind::ConeEnvelopeSystem => {
            if !(0.0..=1.0).contains(&lambda) {
                return Err(CliError::Usage(format!("--lambda must lie in [0, 1], got {lambda}")));
            }
            serde_json::to_value(generate::cone_envelope_system(&mut r, dim, lambda, ws.geom_tol)?)
        }
        Kind::Box | Kind::Slab => {
            let oracle =
                if kind == Kind::Box { generate::random_box(&mut r, dim)? } else { generate::random_slab(&mut r, dim)? };
            match form {
                Form::System => serde_json::to_value(generate::oracle_system(&oracle, ws.geom_tol)?),
                Form::Samples => {
                    let k = if dim <= 3 { 11 } else { 5 };
                    let inside = generate::inside_samples(&oracle, k, 2.0)?;
                    serde_json::to_value(SamplesDoc { oracle: OracleRef::Inline(oracle), inside, outside: Vec::new() })
                }
                Form::Probes => {
                    let (lo, hi) = sample_window(&oracle);
                    let pad = 0.5 * (hi - lo);
                    let probes = generate::outside_points(&mut r, &oracle, lo - pad, hi + pad, 40, 0.25)?;
                    serde_json::to_value(probes)
                }
            }
        }
    }
    .map_err(|e| CliError::Compute(e.to_string()))?;
    match out {
        Some(path) => {
            write_atomic(path, &to_pretty(&doc)?)?;
            Ok(Outcome { positive: true, report: json!({ "command": "generate", "seed": ws.seed, "out": path }) })
        }
        None => Ok(Outcome { positive: true, report: doc }),
    }
}

/// A cube `[lo, hi]ⁿ` that covers the interesting part of the set.
fn sample_window(o: &Oracle) -> (f64, f64) {
    match o {
        Oracle::Box { lower, upper } => (
            lower.iter().copied().fold(f64::INFINITY, f64::min),
            upper.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ),
        _ => (-2.0, 2.0),
    }
}
