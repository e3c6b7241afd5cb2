//! Attack detection and the buffered resilient control loop.
//!
//! Each solve stores the next `λ` predicted nominal states and controls. While
//! the measurement stays within `d_th` of the stored prediction the controller
//! resolves as usual. A larger deviation is treated as falsified data: the
//! stored control for that step is applied open loop and the counter advances.
//! Once the buffer is exhausted the controller resolves on whatever it
//! measures, which the buffer length makes unlikely to be an attack.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::Polytope;
use crate::tube::{saturated_feedback, solve_ocp, OcpStatus, OcpTemplate};

/// Inputs of the detection threshold `d_th = ‖W_a‖_F (A_th + τ w̄)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorConfig {
    pub weight: DMatrix<f64>,
    /// Tolerable weighted attack amplitude `A_th`.
    pub attack_threshold: f64,
    /// Disturbance allowance factor `τ`.
    pub tau: f64,
    /// Disturbance bound `w̄`.
    pub w_bar: f64,
}

impl DetectorConfig {
    pub fn threshold(&self) -> f64 {
        detection_threshold(self)
    }
}

pub fn detection_threshold(cfg: &DetectorConfig) -> f64 {
    cfg.weight.norm() * (cfg.attack_threshold + cfg.tau * cfg.w_bar)
}

/// `‖x_measured − predicted‖₂ > d_th` (strict).
pub fn detect(x_measured: &DVector<f64>, predicted: &DVector<f64>, d_th: f64) -> bool {
    assert_eq!(x_measured.len(), predicted.len(), "detector dimension mismatch");
    (x_measured - predicted).norm() > d_th
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Normal,
    Resilient,
    Recovery,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Normal => "normal",
            Mode::Resilient => "resilient",
            Mode::Recovery => "recovery",
        }
    }
}

/// Control applied after a solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ControlLaw {
    /// `ū*₀ + K(x̃ − x̄*₀)`.
    #[default]
    Feedback,
    /// `ū*₀` alone.
    Nominal,
}

/// Reaction to an OCP that cannot be solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum InfeasiblePolicy {
    /// Use a remaining buffered control when the detector is active, else
    /// saturated `Kx̃`.
    #[default]
    Fallback,
    /// Stop with [`ControllerFault`].
    Abort,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ControllerFault {
    #[error("optimal control problem {status:?} in {mode} mode")]
    Ocp { status: OcpStatus, mode: &'static str },
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ResilienceError {
    #[error("buffer length {lambda} must lie in 1..={max} for horizon {horizon}")]
    BufferLength {
        lambda: usize,
        max: usize,
        horizon: usize,
    },
    #[error("detection threshold must be finite and nonnegative, got {0}")]
    Threshold(f64),
}

/// What happened during one controller step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub u: DVector<f64>,
    pub mode: Mode,
    pub detected: bool,
    /// Distance to the buffered prediction when the detector ran.
    pub deviation: Option<f64>,
    /// Buffer slot used for the applied control (1-based).
    pub buffer_index: Option<usize>,
    /// `Υ*` when the OCP was solved successfully.
    pub ocp_value: Option<f64>,
    pub x0_nominal: Option<DVector<f64>>,
    /// The OCP failed and the fallback control was used.
    pub fallback: bool,
}

/// Mutable state of one closed-loop run.
///
/// With the detector disabled (`d_th = None`) every step resolves, which is
/// plain tube MPC.
#[derive(Clone, Debug)]
pub struct ResilientController {
    lambda: usize,
    d_th: Option<f64>,
    law: ControlLaw,
    policy: InfeasiblePolicy,
    state_buffer: Vec<DVector<f64>>,
    control_buffer: Vec<DVector<f64>>,
    ct: usize,
    last_flag: bool,
    mode: Mode,
}

impl ResilientController {
    /// `lambda ≤ horizon − 1` so every buffered control has a matching prediction.
    pub fn new(
        lambda: usize,
        horizon: usize,
        d_th: Option<f64>,
        law: ControlLaw,
        policy: InfeasiblePolicy,
    ) -> Result<Self, ResilienceError> {
        let max = horizon.saturating_sub(1);
        if lambda == 0 || lambda > max {
            return Err(ResilienceError::BufferLength {
                lambda,
                max,
                horizon,
            });
        }
        if let Some(d) = d_th {
            if !(d.is_finite() && d >= 0.0) {
                return Err(ResilienceError::Threshold(d));
            }
        }
        Ok(Self {
            lambda,
            d_th,
            law,
            policy,
            state_buffer: Vec::new(),
            control_buffer: Vec::new(),
            ct: 1,
            last_flag: false,
            mode: Mode::Normal,
        })
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn counter(&self) -> usize {
        self.ct
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn last_flag(&self) -> bool {
        self.last_flag
    }

    pub fn threshold(&self) -> Option<f64> {
        self.d_th
    }

    pub fn state_buffer(&self) -> &[DVector<f64>] {
        &self.state_buffer
    }

    pub fn control_buffer(&self) -> &[DVector<f64>] {
        &self.control_buffer
    }

    /// One pass of the detect / solve / buffer loop on a measurement.
    ///
    /// `k` and `u_set` are only used by the saturated fallback.
    pub fn step(
        &mut self,
        x_measured: &DVector<f64>,
        template: &OcpTemplate,
        k: &DMatrix<f64>,
        u_set: &Polytope,
    ) -> Result<StepRecord, ControllerFault> {
        let exhausted = self.ct > self.lambda;
        let mut deviation = None;
        let mut flag = false;
        if let Some(d_th) = self.d_th {
            if !self.state_buffer.is_empty() && !exhausted {
                let predicted = &self.state_buffer[self.ct - 1];
                let d = (x_measured - predicted).norm();
                deviation = Some(d);
                flag = d > d_th;
            }
        }
        self.last_flag = flag;

        if flag {
            return Ok(self.replay(flag, deviation, false));
        }

        let mode = if exhausted && !self.state_buffer.is_empty() {
            Mode::Recovery
        } else {
            Mode::Normal
        };
        let sol = solve_ocp(template, x_measured, template.tol());
        if !sol.is_optimal() {
            if self.policy == InfeasiblePolicy::Abort {
                return Err(ControllerFault::Ocp {
                    status: sol.status,
                    mode: mode.as_str(),
                });
            }
            // only the resilient controller owns a buffer worth replaying
            if self.d_th.is_some() && !self.state_buffer.is_empty() && !exhausted {
                return Ok(self.replay(false, deviation, true));
            }
            self.state_buffer.clear();
            self.control_buffer.clear();
            self.ct = 1;
            self.mode = mode;
            return Ok(StepRecord {
                u: saturated_feedback(k, x_measured, u_set),
                mode,
                detected: false,
                deviation,
                buffer_index: None,
                ocp_value: None,
                x0_nominal: None,
                fallback: true,
            });
        }

        let u = match self.law {
            ControlLaw::Feedback => &sol.controls[0] + k * (x_measured - &sol.x0_nominal),
            ControlLaw::Nominal => sol.controls[0].clone(),
        };
        self.state_buffer = sol.states[1..=self.lambda].to_vec();
        self.control_buffer = sol.controls[1..=self.lambda].to_vec();
        self.ct = 1;
        self.mode = mode;
        Ok(StepRecord {
            u,
            mode,
            detected: false,
            deviation,
            buffer_index: None,
            ocp_value: Some(sol.value),
            x0_nominal: Some(sol.x0_nominal),
            fallback: false,
        })
    }

    /// Apply the buffered control at the current counter and advance it.
    fn replay(&mut self, detected: bool, deviation: Option<f64>, fallback: bool) -> StepRecord {
        let idx = self.ct;
        debug_assert!(idx >= 1 && idx <= self.lambda);
        let u = self.control_buffer[idx - 1].clone();
        self.ct += 1;
        self.mode = Mode::Resilient;
        StepRecord {
            u,
            mode: Mode::Resilient,
            detected,
            deviation,
            buffer_index: Some(idx),
            ocp_value: None,
            x0_nominal: None,
            fallback,
        }
    }
}

/// Detector outcome counts against the ground-truth over-threshold flags.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub true_positive: usize,
    pub true_negative: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

impl Confusion {
    pub fn from_flags(truth: &[bool], detected: &[bool]) -> Self {
        assert_eq!(truth.len(), detected.len(), "flag sequences differ in length");
        let mut c = Self::default();
        for (&t, &d) in truth.iter().zip(detected) {
            match (t, d) {
                (true, true) => c.true_positive += 1,
                (false, false) => c.true_negative += 1,
                (false, true) => c.false_positive += 1,
                (true, false) => c.false_negative += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.true_positive + self.true_negative + self.false_positive + self.false_negative
    }

    /// `1 − (FP + FN)/total`; one for an empty record.
    pub fn accuracy(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            1.0
        } else {
            1.0 - (self.false_positive + self.false_negative) as f64 / n as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tube::{build_ocp, synthesize, CostWeights, LinearSystem, OcpOptions, TubeIngredients};

    fn plant() -> (LinearSystem, TubeIngredients, OcpTemplate) {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, -0.1, 0.85]);
        let b = DMatrix::from_row_slice(2, 1, &[0.005, 0.1]);
        let sys = LinearSystem::new(
            a,
            b,
            0.1,
            Polytope::symmetric_box(&[5.0, 5.0]).unwrap(),
            Polytope::symmetric_box(&[2.0]).unwrap(),
            Polytope::symmetric_box(&[0.01, 0.01]).unwrap(),
        )
        .unwrap();
        let w = CostWeights::new(DMatrix::identity(2, 2), DMatrix::identity(1, 1) * 0.1).unwrap();
        let ing = synthesize(&sys, &w, 0.0, 1e-3).unwrap();
        let t = build_ocp(&sys, &ing, &w, 10, &OcpOptions::default()).unwrap();
        (sys, ing, t)
    }

    /// Runs the disturbance-free loop, adding `attack(step)` to the measurement.
    fn run(
        ctl: &mut ResilientController,
        steps: usize,
        attack: impl Fn(usize) -> Option<DVector<f64>>,
    ) -> Vec<StepRecord> {
        let (sys, ing, t) = plant();
        let mut x = DVector::from_vec(vec![2.0, -1.0]);
        let mut out = Vec::new();
        for s in 0..steps {
            let meas = match attack(s) {
                Some(a) => &x + a,
                None => x.clone(),
            };
            let rec = ctl.step(&meas, &t, &ing.k, &sys.u_set).unwrap();
            assert!(sys.u_set.contains(&rec.u, 1e-7));
            x = &sys.a * &x + &sys.b * &rec.u;
            out.push(rec);
        }
        out
    }

    fn controller(lambda: usize) -> ResilientController {
        ResilientController::new(lambda, 10, Some(1.0), ControlLaw::Feedback, InfeasiblePolicy::Abort)
            .unwrap()
    }

    #[test]
    fn threshold_examples() {
        let cfg = DetectorConfig {
            weight: DMatrix::identity(2, 2),
            attack_threshold: 4.0,
            tau: 2.0,
            w_bar: 0.05,
        };
        assert!((detection_threshold(&cfg) - 5.7983).abs() < 5e-5);
        let zero = DetectorConfig { attack_threshold: 0.0, tau: 0.0, ..cfg.clone() };
        assert_eq!(zero.threshold(), 0.0);
        let scalar = DetectorConfig {
            weight: DMatrix::identity(1, 1),
            attack_threshold: 1.0,
            tau: 1.0,
            w_bar: 1.0,
        };
        assert_eq!(scalar.threshold(), 2.0);
    }

    #[test]
    fn detector_is_strict() {
        let z = DVector::from_vec(vec![0.0, 0.0]);
        assert!(!detect(&z, &z, 0.0));
        let x = DVector::from_vec(vec![3.0, 4.0]);
        assert!(!detect(&x, &z, 5.0));
        assert!(detect(&x, &z, 5.0 - 1e-12));
        assert!(detect(&DVector::from_vec(vec![5.0, 5.0]), &z, 5.7983));
    }

    #[test]
    fn buffer_length_must_fit_horizon() {
        for (lambda, ok) in [(0, false), (1, true), (9, true), (10, false)] {
            let r = ResilientController::new(lambda, 10, None, ControlLaw::Feedback, InfeasiblePolicy::Abort);
            assert_eq!(r.is_ok(), ok, "lambda {lambda}");
        }
        assert!(ResilientController::new(3, 10, Some(-1.0), ControlLaw::Feedback, InfeasiblePolicy::Abort).is_err());
    }

    #[test]
    fn quiet_run_stays_normal() {
        let mut ctl = controller(4);
        for rec in run(&mut ctl, 30, |_| None) {
            assert_eq!(rec.mode, Mode::Normal);
            assert!(!rec.detected && rec.ocp_value.is_some());
        }
        assert_eq!(ctl.counter(), 1);
    }

    #[test]
    fn single_attack_uses_one_buffered_control() {
        let big = DVector::from_vec(vec![50.0, 0.0]);
        let mut ctl = controller(4);
        let recs = run(&mut ctl, 8, |s| (s == 3).then(|| big.clone()));
        let modes: Vec<_> = recs.iter().map(|r| r.mode).collect();
        assert_eq!(modes[2], Mode::Normal);
        assert_eq!(modes[3], Mode::Resilient);
        assert_eq!(recs[3].buffer_index, Some(1));
        assert!(recs[3].detected);
        // step 4 compares against the second stored prediction and trusts it
        assert_eq!(modes[4], Mode::Normal);
        assert!(!recs[4].detected);
        assert!(recs[4].deviation.is_some());
    }

    #[test]
    fn buffered_control_is_the_stored_nominal_input() {
        let (sys, ing, t) = plant();
        let mut ctl = controller(3);
        let x = DVector::from_vec(vec![1.0, 1.0]);
        ctl.step(&x, &t, &ing.k, &sys.u_set).unwrap();
        let stored = ctl.control_buffer().to_vec();
        assert_eq!(stored.len(), 3);
        assert_eq!(ctl.state_buffer().len(), 3);
        let far = &x + DVector::from_vec(vec![30.0, 30.0]);
        let rec = ctl.step(&far, &t, &ing.k, &sys.u_set).unwrap();
        assert_eq!(rec.u, stored[0]);
        let rec = ctl.step(&far, &t, &ing.k, &sys.u_set).unwrap();
        assert_eq!(rec.u, stored[1]);
        assert_eq!(ctl.counter(), 3);
    }

    #[test]
    fn exhausted_buffer_forces_recovery() {
        let lambda = 4;
        let big = DVector::from_vec(vec![0.0, 1.5]);
        let mut ctl = controller(lambda);
        let recs = run(&mut ctl, 12, |s| (2..2 + lambda + 1).contains(&s).then(|| big.clone()));
        for (i, s) in (2..2 + lambda).enumerate() {
            assert_eq!(recs[s].mode, Mode::Resilient);
            assert_eq!(recs[s].buffer_index, Some(i + 1));
        }
        let rec = &recs[2 + lambda];
        assert_eq!(rec.mode, Mode::Recovery);
        assert!(rec.deviation.is_none() && rec.ocp_value.is_some());
        assert_eq!(ctl.counter(), 1);
    }

    #[test]
    fn disabled_detector_always_resolves() {
        let big = DVector::from_vec(vec![0.5, 0.0]);
        let mut ctl =
            ResilientController::new(4, 10, None, ControlLaw::Feedback, InfeasiblePolicy::Abort).unwrap();
        for rec in run(&mut ctl, 10, |s| (s % 2 == 1).then(|| big.clone())) {
            assert_eq!(rec.mode, Mode::Normal);
            assert!(rec.deviation.is_none());
        }
    }

    #[test]
    fn infeasible_measurement_uses_policy() {
        let (sys, ing, t) = plant();
        let outside = DVector::from_vec(vec![40.0, 0.0]);
        let mut abort = controller(3);
        assert!(abort.step(&outside, &t, &ing.k, &sys.u_set).is_err());

        let mut plain =
            ResilientController::new(3, 10, None, ControlLaw::Feedback, InfeasiblePolicy::Fallback).unwrap();
        plain.step(&DVector::from_vec(vec![1.0, 0.0]), &t, &ing.k, &sys.u_set).unwrap();
        let rec = plain.step(&outside, &t, &ing.k, &sys.u_set).unwrap();
        assert!(rec.fallback && rec.buffer_index.is_none());
        assert!(sys.u_set.contains(&rec.u, 1e-12));
        assert_eq!(rec.u, saturated_feedback(&ing.k, &outside, &sys.u_set));

        let mut fb =
            ResilientController::new(3, 10, Some(100.0), ControlLaw::Feedback, InfeasiblePolicy::Fallback)
                .unwrap();
        let rec = fb.step(&outside, &t, &ing.k, &sys.u_set).unwrap();
        assert!(rec.fallback && rec.buffer_index.is_none());

        fb.step(&DVector::from_vec(vec![1.0, 0.0]), &t, &ing.k, &sys.u_set).unwrap();
        let stored = fb.control_buffer()[0].clone();
        let rec = fb.step(&outside, &t, &ing.k, &sys.u_set).unwrap();
        assert!(rec.fallback);
        assert_eq!(rec.u, stored);
        assert_eq!(rec.buffer_index, Some(1));
    }

    #[test]
    fn confusion_counts_every_step_once() {
        let truth = [true, false, true, false, false];
        let det = [true, true, false, false, false];
        let c = Confusion::from_flags(&truth, &det);
        assert_eq!((c.true_positive, c.false_positive, c.false_negative, c.true_negative), (1, 1, 1, 2));
        assert_eq!(c.total(), 5);
        assert!((c.accuracy() - 0.6).abs() < 1e-15);
    }
}
