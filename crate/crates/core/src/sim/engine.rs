//! The closed-loop simulation engine.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ControllerKind, ModelUpdate, Scenario, SimError};
use crate::attacks::{sample_attack_trace, AttackTrace};
use crate::geometry::Polytope;
use crate::resilience::{Mode, ResilientController};
use crate::tube::{
    build_ocp, synthesize_with, LinearSystem, OcpOptions, OcpTemplate, SynthesisOptions,
    TubeIngredients,
};

use super::plant::discretize_zoh;

/// Offline part of a controller: model, terminal ingredients and the OCP
/// template at the design point. Immutable and shareable across runs.
#[derive(Clone, Debug)]
pub struct Design {
    pub kind: ControllerKind,
    pub sys: LinearSystem,
    pub ingredients: TubeIngredients,
    pub template: OcpTemplate,
    pub ocp_options: OcpOptions,
    pub lambda: usize,
    pub d_th: Option<f64>,
}

impl Design {
    pub fn new(scn: &Scenario, kind: ControllerKind) -> Result<Self, SimError> {
        scn.validate()?;
        let (a_c, b_c) = scn.plant.linearize(&scn.design_state, &scn.design_input);
        let d = discretize_zoh(&a_c, &b_c, scn.ts);
        let n = scn.state_dim();
        let x_set = Polytope::symmetric_box(scn.x_max.as_slice()).map_err(scenario_geometry)?;
        let u_set = Polytope::symmetric_box(scn.u_max.as_slice()).map_err(scenario_geometry)?;
        let nominal = kind == ControllerKind::NominalMpc;
        let w_set = if nominal || scn.w_bar.amax() == 0.0 {
            Polytope::origin(n)
        } else {
            Polytope::symmetric_box(scn.w_bar.as_slice())
                .and_then(|w| w.affine_image(&d.f))
                .map_err(scenario_geometry)?
        };
        let mut sys = LinearSystem::new(d.a.clone(), d.b.clone(), scn.ts, x_set, u_set, w_set)?;
        sys.f = d.f.clone();
        sys.offset = design_offset(scn, &d.a, &d.b);
        let a_norm = if nominal { 0.0 } else { scn.attack.threshold };
        let ingredients = synthesize_with(
            &sys,
            &scn.weights,
            a_norm,
            &SynthesisOptions {
                mrpi_eps: scn.mrpi_eps,
                gain_weights: scn.gain_weights.clone(),
                invariant_terminal_set: scn.terminal_constraint,
                tighten_inputs: scn.input_tightening,
                ..SynthesisOptions::default()
            },
        )?;
        let ocp_options = OcpOptions {
            terminal_constraint: scn.terminal_constraint,
            tol: scn.qp_tol,
            max_iter: scn.qp_max_iter,
        };
        let template = build_ocp(&sys, &ingredients, &scn.weights, scn.horizon, &ocp_options)?;
        let resilient = kind == ControllerKind::ResilientTubeMpc;
        let lambda = if resilient {
            scn.attack.buffer_length()?
        } else {
            1
        };
        Ok(Self {
            kind,
            sys,
            ingredients,
            template,
            ocp_options,
            lambda,
            d_th: resilient.then(|| scn.detection_threshold()),
        })
    }

    fn controller(&self, scn: &Scenario) -> Result<ResilientController, SimError> {
        Ok(ResilientController::new(
            self.lambda,
            scn.horizon,
            self.d_th,
            scn.control_law,
            scn.on_infeasible,
        )?)
    }

    /// Template of the model linearized at `(x_op, u_op)`.
    fn local_template(
        &self,
        scn: &Scenario,
        x_op: &DVector<f64>,
        u_op: &DVector<f64>,
    ) -> Result<OcpTemplate, SimError> {
        let (a_c, b_c) = scn.plant.linearize(x_op, u_op);
        let d = discretize_zoh(&a_c, &b_c, scn.ts);
        let zero = DVector::zeros(scn.state_dim());
        let next = scn.plant.propagate(x_op, u_op, &zero, scn.ts, scn.substeps);
        let mut sys = self.sys.clone();
        sys.offset = next - &d.a * x_op - &d.b * u_op;
        sys.a = d.a;
        sys.b = d.b;
        Ok(build_ocp(&sys, &self.ingredients, &scn.weights, scn.horizon, &self.ocp_options)?)
    }
}

fn scenario_geometry(e: crate::geometry::GeometryError) -> SimError {
    SimError::Scenario(e.to_string())
}

/// Affine drift of the design model: zero at an equilibrium, otherwise the
/// exact one-step image of the operating point minus its linear part.
fn design_offset(scn: &Scenario, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DVector<f64> {
    let n = scn.state_dim();
    let zero = DVector::zeros(n);
    let rate = scn.plant.derivative(&scn.design_state, &scn.design_input, &zero);
    if rate.amax() == 0.0 {
        return zero;
    }
    let next = scn
        .plant
        .propagate(&scn.design_state, &scn.design_input, &zero, scn.ts, scn.substeps);
    next - a * &scn.design_state - b * &scn.design_input
}

/// One logged sampling instant.
#[derive(Clone, Debug, PartialEq)]
pub struct StepLog {
    /// True state at the start of the step.
    pub x: DVector<f64>,
    /// Measurement seen by the controller.
    pub x_meas: DVector<f64>,
    pub u: DVector<f64>,
    pub w: DVector<f64>,
    pub attack_triggered: bool,
    pub over_threshold: bool,
    pub detected: bool,
    pub mode: Mode,
    /// `xᵀQx + uᵀRu`.
    pub stage_cost: f64,
    pub ocp_value: Option<f64>,
    pub x0_nominal: Option<DVector<f64>>,
    pub deviation: Option<f64>,
    pub buffer_index: Option<usize>,
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimTrace {
    pub kind: ControllerKind,
    pub seed: u64,
    pub steps: Vec<StepLog>,
    /// State after the last logged step.
    pub final_state: DVector<f64>,
    /// Set when the controller aborted the run.
    pub fault: Option<String>,
    pub lambda: usize,
    pub d_th: Option<f64>,
    /// Steps whose true state left `X`.
    pub state_violations: usize,
    /// Steps whose applied input left `U`.
    pub input_violations: usize,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Steps solved on an unverified measurement because a run of detections
    /// outlasted the buffer.
    pub fn buffer_underflows(&self) -> usize {
        self.steps.iter().filter(|s| s.mode == Mode::Recovery).count()
    }

    pub fn feasibility_failures(&self) -> usize {
        self.steps.iter().filter(|s| s.fallback).count() + usize::from(self.fault.is_some())
    }
}

/// Synthesizes the scenario's controller and runs it with the scenario seed.
pub fn run_closed_loop(scn: &Scenario) -> Result<SimTrace, SimError> {
    let design = Design::new(scn, scn.controller)?;
    run_with_design(scn, &design, scn.seed)
}

/// Disturbances are drawn on their own stream so that paired runs of
/// different controllers see identical noise and attacks.
fn sample_disturbances(scn: &Scenario, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    (0..scn.n_sim)
        .map(|_| DVector::from_iterator(scn.w_bar.len(), scn.w_bar.iter().map(|&b| b * (2.0 * rng.random::<f64>() - 1.0))))
        .collect()
}

pub fn run_with_design(scn: &Scenario, design: &Design, seed: u64) -> Result<SimTrace, SimError> {
    let n = scn.state_dim();
    let attacks: AttackTrace = if scn.attack.trigger_mean == 0.0 {
        AttackTrace::quiet(n, scn.n_sim)
    } else {
        sample_attack_trace(&scn.attack, scn.n_sim, seed)?
    };
    let noise = sample_disturbances(scn, seed);
    let mut ctl = design.controller(scn)?;
    let x_set = &design.sys.x_set;
    let u_set = &design.sys.u_set;
    let k = &design.ingredients.k;

    let mut x = scn.x0.clone();
    let mut u_prev = scn.design_input.clone();
    let mut steps = Vec::with_capacity(scn.n_sim);
    let mut fault = None;
    let (mut state_violations, mut input_violations) = (0, 0);
    for (attack, w) in attacks.steps.iter().zip(&noise) {
        let x_meas = if attack.triggered { &x + &attack.amplitude } else { x.clone() };
        let local;
        let template = match scn.model_update {
            ModelUpdate::Fixed => &design.template,
            ModelUpdate::PerStep { min_lead } => {
                let mut u_op = u_prev.clone();
                if u_op[0].abs() < min_lead {
                    u_op[0] = if u_op[0] < 0.0 { -min_lead } else { min_lead };
                }
                local = design.local_template(scn, &x_meas, &u_op)?;
                &local
            }
        };
        let mut rec = match ctl.step(&x_meas, template, k, u_set) {
            Ok(r) => r,
            Err(e) => {
                fault = Some(e.to_string());
                break;
            }
        };
        if !scn.input_tightening {
            rec.u = rec.u.zip_map(&scn.u_max, |u, b| u.clamp(-b, b));
        }
        if !x_set.contains(&x, 1e-9) {
            state_violations += 1;
        }
        if !u_set.contains(&rec.u, 1e-6) {
            input_violations += 1;
        }
        let stage_cost = scn.weights.stage_cost(&x, &rec.u);
        let x_next = scn.plant.propagate(&x, &rec.u, w, scn.ts, scn.substeps);
        steps.push(StepLog {
            x: std::mem::replace(&mut x, x_next),
            x_meas,
            u: rec.u.clone(),
            w: w.clone(),
            attack_triggered: attack.triggered,
            over_threshold: attack.over_threshold,
            detected: rec.detected,
            mode: rec.mode,
            stage_cost,
            ocp_value: rec.ocp_value,
            x0_nominal: rec.x0_nominal,
            deviation: rec.deviation,
            buffer_index: rec.buffer_index,
            fallback: rec.fallback,
        });
        u_prev = rec.u;
    }
    Ok(SimTrace {
        kind: design.kind,
        seed,
        steps,
        final_state: x,
        fault,
        lambda: design.lambda,
        d_th: design.d_th,
        state_violations,
        input_violations,
    })
}
