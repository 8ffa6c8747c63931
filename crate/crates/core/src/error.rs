use thiserror::Error;

use crate::linf::LinfPoint;
use crate::retraction::RetractionTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for dimension {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Lower bound exceeds upper bound at the evaluated point.
    #[error("inconsistent bounds on coordinate {coord}: lower {lower} > upper {upper}")]
    InconsistentBounds { coord: usize, lower: f64, upper: f64 },

    #[error("retraction did not converge after {} residuals (last {:e})", .trace.residuals.len(), .trace.residuals.last().copied().unwrap_or(f64::NAN))]
    RetractionDiverged { trace: Box<RetractionTrace> },

    #[error("extremalization stalled after {iterations} iterations (residual {residual:e})")]
    ExtremalizeStalled {
        iterations: usize,
        residual: f64,
        residuals: Vec<f64>,
    },

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("inside sample is empty")]
    EmptySample,

    /// A sampled member of Q landed inside an assigned cone.
    #[error("cone for probe {probe:?} contains inside point {witness:?}")]
    ConeConstruction { probe: LinfPoint, witness: LinfPoint },

    #[error("internal construction failure: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by caller misuse rather than by the computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::IndexOutOfRange { .. }
                | Error::NonFinite(_)
                | Error::InvalidArgument(_)
                | Error::InvalidMetric(_)
                | Error::EmptySample
        )
    }
}
