//! Run configuration: a TOML document that starts from a named preset and
//! overrides any scenario field. Unknown keys are rejected.

use nalgebra::{DMatrix, DVector};
use rtmpc::resilience::{ControlLaw, InfeasiblePolicy};
use rtmpc::sim::{ControllerKind, ModelUpdate, MsdParams, PlantModel, Scenario};
use rtmpc::tube::CostWeights;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub cost: CostSection,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Msd,
    Unicycle,
}

type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub ts: Option<f64>,
    pub substeps: Option<usize>,
    pub x_max: Option<Vec<f64>>,
    pub u_max: Option<Vec<f64>>,
    pub w_bar: Option<Vec<f64>>,
    pub x0: Option<Vec<f64>>,
    pub design_state: Option<Vec<f64>>,
    pub design_input: Option<Vec<f64>>,
    pub msd: Option<MsdSection>,
    pub linear: Option<LinearSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsdSection {
    pub mass: f64,
    pub damping: f64,
    pub stiffness: f64,
    pub hardening: f64,
}

/// Continuous-time `ẋ = A x + B u`; replaces the preset's plant.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSection {
    pub a: Matrix,
    pub b: Matrix,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub q: Option<Matrix>,
    pub r: Option<Matrix>,
    pub gain_q: Option<Matrix>,
    pub gain_r: Option<Matrix>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub trigger_mean: Option<f64>,
    pub amp_mean: Option<f64>,
    pub amp_std: Option<f64>,
    pub threshold: Option<f64>,
    pub significance: Option<f64>,
    pub horizon: Option<usize>,
    pub weight: Option<Matrix>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub tau: Option<f64>,
    /// Fixed `d_th`; the formula is used when absent.
    pub threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub kind: Option<KindName>,
    pub horizon: Option<usize>,
    pub control_law: Option<LawName>,
    pub on_infeasible: Option<PolicyName>,
    pub terminal_constraint: Option<bool>,
    pub input_tightening: Option<bool>,
    pub mrpi_eps: Option<f64>,
    pub model_update: Option<UpdateName>,
    pub min_lead: Option<f64>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum KindName {
    NominalMpc,
    TubeMpc,
    ResilientTubeMpc,
}

impl From<KindName> for ControllerKind {
    fn from(k: KindName) -> Self {
        match k {
            KindName::NominalMpc => ControllerKind::NominalMpc,
            KindName::TubeMpc => ControllerKind::TubeMpc,
            KindName::ResilientTubeMpc => ControllerKind::ResilientTubeMpc,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawName {
    Feedback,
    Nominal,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyName {
    Fallback,
    Abort,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateName {
    Fixed,
    PerStep,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    /// Monte Carlo and sweep run count.
    pub runs: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
}

pub const DEFAULT_RUNS: usize = 20;
pub const DEFAULT_OUT: &str = "out";

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn runs(&self) -> usize {
        self.simulation.runs.unwrap_or(DEFAULT_RUNS)
    }

    /// Preset with every override applied, validated.
    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let mut s = match self.preset {
            Preset::Msd => Scenario::msd(),
            Preset::Unicycle => Scenario::unicycle(),
        };
        let sys = &self.system;
        if let Some(m) = &sys.msd {
            if !matches!(s.plant, PlantModel::Msd(_)) {
                return Err(config("system.msd", "only applies to the msd preset"));
            }
            s.plant = PlantModel::Msd(MsdParams {
                mass: m.mass,
                damping: m.damping,
                stiffness: m.stiffness,
                hardening: m.hardening,
            });
        }
        if let Some(l) = &sys.linear {
            s.plant = PlantModel::Linear {
                a: matrix("system.linear.a", &l.a)?,
                b: matrix("system.linear.b", &l.b)?,
            };
            // a changed plant invalidates the preset's operating point
            s.design_state = DVector::zeros(s.state_dim());
            s.design_input = DVector::zeros(s.input_dim());
            s.model_update = ModelUpdate::Fixed;
        }
        set(&mut s.ts, sys.ts);
        set(&mut s.substeps, sys.substeps);
        set_vec(&mut s.x_max, &sys.x_max);
        set_vec(&mut s.u_max, &sys.u_max);
        set_vec(&mut s.w_bar, &sys.w_bar);
        set_vec(&mut s.x0, &sys.x0);
        set_vec(&mut s.design_state, &sys.design_state);
        set_vec(&mut s.design_input, &sys.design_input);

        let c = &self.cost;
        if let Some(q) = &c.q {
            s.weights.q = matrix("cost.q", q)?;
        }
        if let Some(r) = &c.r {
            s.weights.r = matrix("cost.r", r)?;
        }
        s.gain_weights = match (&c.gain_q, &c.gain_r) {
            (None, None) => s.gain_weights,
            (Some(q), Some(r)) => Some(CostWeights {
                q: matrix("cost.gain_q", q)?,
                r: matrix("cost.gain_r", r)?,
            }),
            _ => return Err(config("cost", "gain_q and gain_r must be given together")),
        };

        let a = &self.attack;
        set(&mut s.attack.trigger_mean, a.trigger_mean);
        set(&mut s.attack.amp_mean, a.amp_mean);
        set(&mut s.attack.amp_std, a.amp_std);
        set(&mut s.attack.threshold, a.threshold);
        set(&mut s.attack.significance, a.significance);
        set(&mut s.attack.horizon, a.horizon);
        if let Some(w) = &a.weight {
            s.attack.weight = matrix("attack.weight", w)?;
        }

        set(&mut s.detector.tau, self.detector.tau);
        if self.detector.threshold.is_some() {
            s.detector.threshold_override = self.detector.threshold;
        }

        let k = &self.controller;
        if let Some(kind) = k.kind {
            s.controller = kind.into();
        }
        set(&mut s.horizon, k.horizon);
        if let Some(l) = k.control_law {
            s.control_law = match l {
                LawName::Feedback => ControlLaw::Feedback,
                LawName::Nominal => ControlLaw::Nominal,
            };
        }
        if let Some(p) = k.on_infeasible {
            s.on_infeasible = match p {
                PolicyName::Fallback => InfeasiblePolicy::Fallback,
                PolicyName::Abort => InfeasiblePolicy::Abort,
            };
        }
        set(&mut s.terminal_constraint, k.terminal_constraint);
        set(&mut s.input_tightening, k.input_tightening);
        set(&mut s.mrpi_eps, k.mrpi_eps);
        let preset_lead = match s.model_update {
            ModelUpdate::PerStep { min_lead } => Some(min_lead),
            ModelUpdate::Fixed => None,
        };
        s.model_update = match (k.model_update, k.min_lead) {
            (Some(UpdateName::Fixed), None) => ModelUpdate::Fixed,
            (Some(UpdateName::PerStep), lead) => ModelUpdate::PerStep {
                min_lead: lead.or(preset_lead).unwrap_or(0.0),
            },
            (None, None) => s.model_update,
            (None, Some(lead)) if preset_lead.is_some() => ModelUpdate::PerStep { min_lead: lead },
            _ => return Err(config("controller.min_lead", "needs model_update = \"per-step\"")),
        };

        set(&mut s.n_sim, self.simulation.steps);
        set(&mut s.seed, self.simulation.seed);
        set(&mut s.qp_tol, self.solver.tol);
        set(&mut s.qp_max_iter, self.solver.max_iter);
        if self.simulation.runs == Some(0) {
            return Err(config("simulation.runs", "must be at least 1"));
        }
        s.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(s)
    }
}

fn config(path: &str, msg: &str) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

fn set<T: Copy>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_vec(slot: &mut DVector<f64>, v: &Option<Vec<f64>>) {
    if let Some(v) = v {
        *slot = DVector::from_vec(v.clone());
    }
}

fn matrix(path: &str, rows: &Matrix) -> Result<DMatrix<f64>, CliError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(config(path, "matrix is empty"));
    }
    if rows.iter().any(|r| r.len() != cols) {
        return Err(config(path, "rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}
