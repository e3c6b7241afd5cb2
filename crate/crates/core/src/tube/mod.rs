//! Tube-based MPC: constraint tightening, terminal ingredients and the
//! condensed optimal control problem solved online.
//!
//! The plant model is `x⁺ = Ax + Bu + c + w` with `w ∈ W` already expressed in
//! state coordinates. The controller steers a nominal trajectory `x̄` with the
//! OCP and applies `u = ū₀ + K(x − x̄₀)`, which keeps `x − x̄` inside the
//! robust invariant cross-section `Z` of `x⁺ = (A + BK)x + w`.

mod ocp;
mod synthesis;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{GeometryError, MrpiInfo, Polytope};
use crate::solvers::{eig_min_sym, SolverError};

pub use ocp::{
    build_ocp, control_from_solution, sample_feasible_region, solve_ocp, OcpOptions,
    OcpSolution, OcpStatus, OcpTemplate, saturated_feedback,
};
pub use synthesis::{
    lmi_residual, max_positively_invariant_set, minimize_attack_offset, offset_vertices,
    synthesize, synthesize_with, tighten_constraints, SynthesisOptions,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TubeError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid weights: {0}")]
    Weights(String),
    #[error("{stage}: {source}")]
    Geometry {
        stage: &'static str,
        #[source]
        source: GeometryError,
    },
    #[error("{stage}: {source}")]
    Solver {
        stage: &'static str,
        #[source]
        source: SolverError,
    },
    #[error("{0} is empty")]
    EmptySet(&'static str),
    #[error("{0} must contain the origin")]
    OriginOutside(&'static str),
    #[error("U_tight empty or K infeasible: {0}")]
    InputInfeasible(String),
    #[error("attack offset infeasible at vertex {vertex:?}")]
    OffsetInfeasible { vertex: Vec<f64> },
    #[error("no invariant-set fixed point within {0} iterations")]
    NoFixedPoint(usize),
}

pub(crate) fn geo(stage: &'static str) -> impl Fn(GeometryError) -> TubeError {
    move |source| TubeError::Geometry { stage, source }
}

pub(crate) fn sol(stage: &'static str) -> impl Fn(SolverError) -> TubeError {
    move |source| TubeError::Solver { stage, source }
}

/// Discrete-time model used by the controller.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Map from the raw disturbance to state increments (informational; `w_set`
    /// is already in state coordinates).
    pub f: DMatrix<f64>,
    /// Affine drift `c`; zero for models linearized at an equilibrium.
    pub offset: DVector<f64>,
    /// Sampling period in seconds.
    pub ts: f64,
    pub x_set: Polytope,
    pub u_set: Polytope,
    pub w_set: Polytope,
}

impl LinearSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        ts: f64,
        x_set: Polytope,
        u_set: Polytope,
        w_set: Polytope,
    ) -> Result<Self, TubeError> {
        let n = a.nrows();
        let sys = Self {
            f: DMatrix::identity(n, n),
            offset: DVector::zeros(n),
            a,
            b,
            ts,
            x_set,
            u_set,
            w_set,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn validate(&self) -> Result<(), TubeError> {
        let n = self.a.nrows();
        let m = self.b.ncols();
        let bad = |what: &str| Err(TubeError::Dimension(what.to_string()));
        if !self.a.is_square() || self.b.nrows() != n || self.offset.len() != n || self.f.nrows() != n {
            return bad("A, B, F and offset must agree on the state dimension");
        }
        if self.x_set.dim() != n || self.w_set.dim() != n {
            return bad("X and W must live in state space");
        }
        if self.u_set.dim() != m {
            return bad("U must live in input space");
        }
        let zero_n = DVector::zeros(n);
        if !self.x_set.contains(&zero_n, crate::geometry::TOL) {
            return Err(TubeError::OriginOutside("X"));
        }
        if !self.w_set.contains(&zero_n, crate::geometry::TOL) {
            return Err(TubeError::OriginOutside("W"));
        }
        if !self.u_set.contains(&DVector::zeros(m), crate::geometry::TOL) {
            return Err(TubeError::OriginOutside("U"));
        }
        Ok(())
    }

    /// Closed-loop matrix `A + BK`.
    pub fn closed_loop(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a + &self.b * k
    }
}

/// Stage weights of `½(xᵀQx + uᵀRu)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostWeights {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl CostWeights {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self, TubeError> {
        let w = Self { q, r };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), TubeError> {
        let q = eig_min_sym(&self.q).map_err(|e| TubeError::Weights(format!("Q: {e}")))?;
        if q < -1e-12 {
            return Err(TubeError::Weights(format!("Q has eigenvalue {q}")));
        }
        let r = eig_min_sym(&self.r).map_err(|e| TubeError::Weights(format!("R: {e}")))?;
        if r <= 0.0 {
            return Err(TubeError::Weights(format!("R has eigenvalue {r}")));
        }
        Ok(())
    }

    /// `xᵀQx + uᵀRu` (without the ½).
    pub fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        x.dot(&(&self.q * x)) + u.dot(&(&self.r * u))
    }
}

/// Everything the online controller needs besides the model matrices.
#[derive(Clone, Debug)]
pub struct TubeIngredients {
    /// Feedback gain, `u = Kx`.
    pub k: DMatrix<f64>,
    /// Terminal cost matrix.
    pub p: DMatrix<f64>,
    /// Tube cross-section.
    pub z: Polytope,
    pub x_tight: Polytope,
    pub u_tight: Polytope,
    pub x_f: Polytope,
    /// Number of invariant-set iterations until the fixed point.
    pub terminal_steps: usize,
    /// Constant `α‖𝒜‖` making the terminal decrease condition hold.
    pub attack_offset: f64,
    /// Scaling `δ` with `P = (1 + δ) P₀`.
    pub terminal_scale: f64,
    pub mrpi: MrpiInfo,
}
