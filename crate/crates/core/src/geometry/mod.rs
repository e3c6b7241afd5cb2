//! Convex polytopes in half-space form for dimensions up to four, plus the
//! minimal robust positively invariant set approximation used for tubes.

mod hull;
mod mrpi;
mod zonotope;
mod polytope;

use thiserror::Error;

use crate::solvers::SolverError;

pub use mrpi::{mrpi_approx, mrpi_approx_detailed, MrpiInfo};
pub use polytope::Polytope;

/// Absolute tolerance used for membership, hull construction and merging.
pub const TOL: f64 = 1e-9;

/// Largest ambient dimension handled by vertex enumeration and hulls.
pub const MAX_DIM: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("lower bound exceeds upper bound in coordinate {0}")]
    InvalidBounds(usize),
    #[error("row {0} of the constraint matrix is zero")]
    ZeroRow(usize),
    #[error("non-finite value in polytope data")]
    NonFinite,
    #[error("set is empty")]
    Empty,
    #[error("set is unbounded")]
    Unbounded,
    #[error("dimension {0} exceeds the supported maximum of 4")]
    DimensionTooLarge(usize),
    #[error("matrix is not contractive (spectral radius {0})")]
    NotContractive(f64),
    #[error("approximation accuracy must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("disturbance set must contain the origin in its interior")]
    OriginNotInterior,
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error(transparent)]
    Solver(#[from] SolverError),
}
