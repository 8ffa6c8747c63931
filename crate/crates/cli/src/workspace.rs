use std::path::PathBuf;

use hkit_core::retraction::RetractConfig;
use hkit_core::DEFAULT_GEOM_TOL;

use crate::CliError;

pub const GEOM_TOL_ENV: &str = "HKIT_GEOM_TOL";

/// Parameters shared by every command of one invocation.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub tol: f64,
    pub alpha: f64,
    pub delta_frac: f64,
    pub seed: u64,
    pub geom_tol: f64,
    pub max_iter: usize,
    pub k_max: u64,
    pub order: Option<Vec<usize>>,
    pub report: Option<PathBuf>,
}

impl Workspace {
    pub fn new(g: &crate::GlobalArgs) -> Result<Self, CliError> {
        let geom_tol = match std::env::var(GEOM_TOL_ENV) {
            Ok(v) => v
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|t| *t >= 0.0 && t.is_finite())
                .ok_or_else(|| CliError::Usage(format!("{GEOM_TOL_ENV}={v:?} is not a nonnegative number")))?,
            Err(_) => DEFAULT_GEOM_TOL,
        };
        if !(g.tol > 0.0 && g.tol.is_finite()) {
            return Err(CliError::Usage(format!("--tol must be positive, got {}", g.tol)));
        }
        if !(g.alpha > 0.0 && g.alpha < 0.125) {
            return Err(CliError::Usage(format!("--alpha must lie in (0, 1/8), got {}", g.alpha)));
        }
        if g.max_iter == 0 {
            return Err(CliError::Usage("--max-iter must be positive".into()));
        }
        if g.k_max < 4 {
            return Err(CliError::Usage("--k-max must be at least 4".into()));
        }
        Ok(Self {
            tol: g.tol,
            alpha: g.alpha,
            delta_frac: hkit_core::characterization::DEFAULT_DELTA_FRAC,
            seed: g.seed,
            geom_tol,
            max_iter: g.max_iter,
            k_max: g.k_max,
            order: g.order.as_ref().map(|o| o.0.clone()),
            report: g.report.clone(),
        })
    }

    pub fn retract_config(&self) -> RetractConfig {
        RetractConfig { tol: self.tol, max_iter: self.max_iter, k_max: self.k_max, order: self.order.clone(), radius: None }
    }
}
