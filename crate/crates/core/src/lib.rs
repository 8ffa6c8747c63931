//! Computational toolkit for injective (hyperconvex) subsets of `(ℝⁿ, ‖·‖∞)`.

pub mod characterization;
pub mod error;
pub mod generate;
pub mod hyperplane;
pub mod isbell;
pub mod linf;
pub mod lipschitz;
pub mod retraction;

pub use error::{Error, Result};
pub use linf::{Ball, ConeRegion, ConeSign, LinfPoint};
pub use lipschitz::{BoundPair, Generator, LipschitzBound, Side};
pub use retraction::{InjectiveSystem, Membership, RetractConfig, RetractMethod, RetractionTrace};

/// Default slack for boundary and feasibility predicates.
pub const DEFAULT_GEOM_TOL: f64 = 1e-9;
