//! Closed-loop experiments: plants, scenarios, the simulation engine, metrics
//! and the Monte Carlo harness.
//!
//! The true plant is always the continuous-time model integrated with RK4.
//! The controller only sees a zero-order-hold linearization and a possibly
//! falsified measurement `x̃ = x + W_a a`.

mod engine;
mod metrics;
mod plant;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::attacks::{AttackError, AttackModel};
use crate::resilience::{ControlLaw, InfeasiblePolicy, ResilienceError};
use crate::solvers::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::tube::{CostWeights, TubeError};

pub use engine::{run_closed_loop, run_with_design, Design, SimTrace, StepLog};
pub use metrics::{compute_metrics, monte_carlo, monte_carlo_with, Aggregate, Metrics, MonteCarloReport, RunRow, Stat};
pub use plant::{discretize_zoh, msd_derivative, unicycle_derivative, Discretized, MsdParams, PlantModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("synthesis: {0}")]
    Synthesis(#[from] TubeError),
    #[error("attack model: {0}")]
    Attack(#[from] AttackError),
    #[error("controller: {0}")]
    Controller(#[from] ResilienceError),
    #[error("trace length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    /// Same OCP with `W = {0}`: no tube, no tightening, no detector.
    NominalMpc,
    /// Tube MPC acting on the raw measurement.
    TubeMpc,
    /// Tube MPC with detector and control buffer.
    ResilientTubeMpc,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [
        ControllerKind::NominalMpc,
        ControllerKind::TubeMpc,
        ControllerKind::ResilientTubeMpc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::NominalMpc => "nominal-mpc",
            ControllerKind::TubeMpc => "tube-mpc",
            ControllerKind::ResilientTubeMpc => "resilient-tube-mpc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// How the controller model follows the plant.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelUpdate {
    /// One linearization at the design point for the whole run.
    Fixed,
    /// Relinearize at the measurement and the last applied input before every
    /// solve. The leading input is kept at least `min_lead` in magnitude so
    /// that a vehicle at rest still has a steerable model.
    PerStep { min_lead: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorSettings {
    /// `τ` in `d_th = ‖W_a‖_F (A_th + τ w̄)`.
    pub tau: f64,
    /// Use this `d_th` instead of the formula.
    pub threshold_override: Option<f64>,
}

/// Everything needed for one closed-loop experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub plant: PlantModel,
    pub ts: f64,
    /// RK4 steps per sampling period for the true plant.
    pub substeps: usize,
    /// Symmetric state bounds `|xᵢ| ≤ x_maxᵢ`.
    pub x_max: DVector<f64>,
    pub u_max: DVector<f64>,
    /// Per-state bound of the additive continuous-time disturbance.
    pub w_bar: DVector<f64>,
    pub x0: DVector<f64>,
    pub n_sim: usize,
    pub horizon: usize,
    pub weights: CostWeights,
    /// Weights of the ancillary tube gain; the cost weights when `None`.
    pub gain_weights: Option<CostWeights>,
    pub attack: AttackModel,
    pub detector: DetectorSettings,
    pub controller: ControllerKind,
    pub control_law: ControlLaw,
    pub on_infeasible: InfeasiblePolicy,
    pub terminal_constraint: bool,
    /// Tighten `U` by `KZ`. When off, the actuator saturates the applied
    /// input to `U` instead.
    pub input_tightening: bool,
    pub mrpi_eps: f64,
    /// Operating point of the synthesis model.
    pub design_state: DVector<f64>,
    pub design_input: DVector<f64>,
    pub model_update: ModelUpdate,
    /// KKT tolerance and iteration cap of every OCP solve.
    pub qp_tol: f64,
    pub qp_max_iter: usize,
    pub seed: u64,
}

impl Scenario {
    /// Mass-spring-damper benchmark with the attack campaign
    /// `ā = 0.2`, `σ = 20`, `A_th = 4`, `τ = 2`.
    pub fn msd() -> Self {
        Self {
            plant: PlantModel::Msd(MsdParams::TABLE),
            ts: 0.1,
            substeps: 10,
            x_max: DVector::from_vec(vec![5.0, 5.0]),
            u_max: DVector::from_vec(vec![2.0]),
            w_bar: DVector::from_vec(vec![0.05, 0.05]),
            x0: DVector::from_vec(vec![2.0, -3.0]),
            n_sim: 100,
            horizon: 10,
            weights: CostWeights {
                q: DMatrix::identity(2, 2),
                r: DMatrix::from_element(1, 1, MSD_INPUT_WEIGHT),
            },
            gain_weights: None,
            attack: AttackModel {
                trigger_mean: 0.2,
                amp_mean: 0.0,
                amp_std: 20.0,
                threshold: 4.0,
                significance: 0.01,
                horizon: 100,
                weight: DMatrix::identity(2, 2),
            },
            detector: DetectorSettings {
                tau: 2.0,
                threshold_override: None,
            },
            controller: ControllerKind::ResilientTubeMpc,
            control_law: ControlLaw::Feedback,
            on_infeasible: InfeasiblePolicy::Fallback,
            terminal_constraint: true,
            input_tightening: true,
            mrpi_eps: 1e-3,
            design_state: DVector::zeros(2),
            design_input: DVector::zeros(1),
            model_update: ModelUpdate::Fixed,
            qp_tol: DEFAULT_TOL,
            qp_max_iter: DEFAULT_MAX_ITER,
            seed: 1,
        }
    }

    /// Planar vehicle parking at the origin from `(−5, 4, −π/2)`.
    pub fn unicycle() -> Self {
        let w_bar = DVector::from_vec(vec![0.1, 0.1, 0.03]);
        let tau = 5.8;
        let d_th = 1.5;
        // d_th is given directly; A_th is the level the threshold formula would
        // need, and it labels which attacks count as over-threshold
        let a_th = d_th / 3f64.sqrt() - tau * w_bar.max();
        Self {
            plant: PlantModel::Unicycle,
            ts: 0.1,
            substeps: 10,
            x_max: DVector::from_vec(vec![10.0, 10.0, std::f64::consts::PI]),
            u_max: DVector::from_vec(vec![0.5, 0.1]),
            w_bar,
            x0: DVector::from_vec(vec![-5.0, 4.0, -std::f64::consts::FRAC_PI_2]),
            n_sim: 600,
            horizon: 20,
            weights: CostWeights {
                q: DMatrix::identity(3, 3) * 0.1,
                r: DMatrix::identity(2, 2) * 0.05,
            },
            gain_weights: None,
            attack: AttackModel {
                trigger_mean: 0.1,
                amp_mean: 0.0,
                amp_std: 0.45,
                threshold: a_th,
                significance: 0.01,
                horizon: 100,
                weight: DMatrix::identity(3, 3),
            },
            detector: DetectorSettings {
                tau,
                threshold_override: Some(d_th),
            },
            controller: ControllerKind::ResilientTubeMpc,
            control_law: ControlLaw::Feedback,
            on_infeasible: InfeasiblePolicy::Fallback,
            terminal_constraint: false,
            // K·Z needs more turn rate than the vehicle has, so U ⊖ KZ is
            // empty; the actuator clips instead
            input_tightening: false,
            mrpi_eps: 1e-2,
            design_state: DVector::zeros(3),
            design_input: DVector::from_vec(vec![UNICYCLE_CRUISE_SPEED, 0.0]),
            model_update: ModelUpdate::PerStep {
                min_lead: UNICYCLE_CRUISE_SPEED,
            },
            qp_tol: DEFAULT_TOL,
            qp_max_iter: DEFAULT_MAX_ITER,
            seed: 1,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.plant.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.plant.input_dim()
    }

    /// Detection threshold used by the resilient controller.
    pub fn detection_threshold(&self) -> f64 {
        self.detector.threshold_override.unwrap_or_else(|| {
            self.attack.weight.norm() * (self.attack.threshold + self.detector.tau * self.w_bar.max())
        })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Scenario(m));
        let n = self.state_dim();
        let m = self.input_dim();
        if let PlantModel::Linear { a, b } = &self.plant {
            if !a.is_square() || b.nrows() != a.nrows() {
                return bad("linear plant matrices have inconsistent shapes".into());
            }
        }
        if let PlantModel::Msd(p) = &self.plant {
            if !(p.mass > 0.0 && p.damping > 0.0 && p.stiffness > 0.0 && p.hardening > 0.0) {
                return bad("mass-spring-damper parameters must be positive".into());
            }
        }
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            return bad(format!("sampling period must be positive, got {}", self.ts));
        }
        if self.substeps == 0 {
            return bad("substeps must be at least 1".into());
        }
        for (name, v, len) in [
            ("x_max", &self.x_max, n),
            ("u_max", &self.u_max, m),
            ("w_bar", &self.w_bar, n),
            ("x0", &self.x0, n),
            ("design_state", &self.design_state, n),
            ("design_input", &self.design_input, m),
        ] {
            if v.len() != len {
                return bad(format!("{name} has length {}, expected {len}", v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return bad(format!("{name} is not finite"));
            }
        }
        if self.x_max.iter().any(|&b| b <= 0.0) {
            return bad("state bounds must be positive".into());
        }
        // U = {0} is a valid set; synthesis decides whether it is usable
        if self.u_max.iter().any(|&b| b < 0.0) {
            return bad("input bounds must be nonnegative".into());
        }
        if self.w_bar.iter().any(|&b| b < 0.0) {
            return bad("disturbance bounds must be nonnegative".into());
        }
        if self.x0.iter().zip(self.x_max.iter()).any(|(x, b)| x.abs() > *b) {
            return bad("initial state lies outside the state bounds".into());
        }
        if self.n_sim == 0 {
            return bad("n_sim must be at least 1".into());
        }
        if self.horizon < 2 {
            return bad("horizon must be at least 2".into());
        }
        if self.weights.q.shape() != (n, n) || self.weights.r.shape() != (m, m) {
            return bad("cost weights do not match the plant dimensions".into());
        }
        self.weights.validate()?;
        if let Some(g) = &self.gain_weights {
            if g.q.shape() != (n, n) || g.r.shape() != (m, m) {
                return bad("gain weights do not match the plant dimensions".into());
            }
            g.validate()?;
        }
        self.attack.validate()?;
        if self.attack.weight.nrows() != n {
            return bad("attack weight must be square of the state dimension".into());
        }
        if !(self.detector.tau >= 0.0) {
            return bad("tau must be nonnegative".into());
        }
        if let Some(d) = self.detector.threshold_override {
            if !(d >= 0.0 && d.is_finite()) {
                return bad("detection threshold must be nonnegative".into());
            }
        }
        if !(self.qp_tol > 0.0 && self.qp_tol.is_finite()) || self.qp_max_iter == 0 {
            return bad("QP tolerance and iteration cap must be positive".into());
        }
        if !(self.mrpi_eps > 0.0) {
            return bad("mrpi_eps must be positive".into());
        }
        if let ModelUpdate::PerStep { min_lead } = self.model_update {
            if !(min_lead >= 0.0 && min_lead.is_finite()) {
                return bad("min_lead must be nonnegative".into());
            }
        }
        Ok(())
    }
}

/// Input weight of the mass-spring-damper benchmark; the state weight is `I`.
pub const MSD_INPUT_WEIGHT: f64 = 1.0;

/// Forward speed of the vehicle's synthesis linearization.
pub const UNICYCLE_CRUISE_SPEED: f64 = 0.5;
