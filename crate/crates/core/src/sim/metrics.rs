//! Performance metrics and Monte Carlo aggregation.

use rayon::prelude::*;

use super::engine::{run_with_design, Design, SimTrace};
use super::{ControllerKind, Scenario, SimError};
use crate::resilience::Confusion;
use crate::tube::CostWeights;

/// Per-run performance summary.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    /// Mean stage cost `Σ(xᵀQx + uᵀRu)/N_sim`.
    pub j_p: f64,
    pub accuracy: f64,
    pub fp_count: usize,
    pub fn_count: usize,
    /// `(J_tmpc − J_p)/J_tmpc` against a paired tube-MPC run.
    pub saving_vs_tmpc: Option<f64>,
    /// `(J_p − J_nom)/J_nom` against an attack-free nominal run.
    pub tracking_error_vs_nominal: Option<f64>,
    pub feasibility_failures: usize,
    pub state_violations: usize,
    pub input_violations: usize,
    pub final_norm: f64,
    pub completed: bool,
}

/// Metrics of `trace`, with optional paired baselines of the same length.
pub fn compute_metrics(
    trace: &SimTrace,
    baseline_tmpc: Option<&SimTrace>,
    baseline_nominal: Option<&SimTrace>,
    weights: &CostWeights,
) -> Result<Metrics, SimError> {
    let j_p = mean_cost(trace, weights);
    let ratio = |base: Option<&SimTrace>, f: fn(f64, f64) -> f64| -> Result<Option<f64>, SimError> {
        match base {
            None => Ok(None),
            Some(b) if b.len() != trace.len() => Err(SimError::LengthMismatch(trace.len(), b.len())),
            Some(b) => Ok(Some(f(j_p, mean_cost(b, weights)))),
        }
    };
    let saving = ratio(baseline_tmpc, |j, base| if base == 0.0 { 0.0 } else { (base - j) / base })?;
    let tracking = ratio(baseline_nominal, |j, base| if base == 0.0 { 0.0 } else { (j - base) / base })?;
    let truth: Vec<bool> = trace.steps.iter().map(|s| s.over_threshold).collect();
    let detected: Vec<bool> = trace.steps.iter().map(|s| s.detected).collect();
    let c = Confusion::from_flags(&truth, &detected);
    Ok(Metrics {
        j_p,
        accuracy: c.accuracy(),
        fp_count: c.false_positive,
        fn_count: c.false_negative,
        saving_vs_tmpc: saving,
        tracking_error_vs_nominal: tracking,
        feasibility_failures: trace.feasibility_failures(),
        state_violations: trace.state_violations,
        input_violations: trace.input_violations,
        final_norm: trace.final_state.norm(),
        completed: trace.fault.is_none(),
    })
}

/// Stage costs recomputed from the logged states and inputs.
fn mean_cost(trace: &SimTrace, weights: &CostWeights) -> f64 {
    if trace.is_empty() {
        return 0.0;
    }
    let total: f64 = trace.steps.iter().map(|s| weights.stage_cost(&s.x, &s.u)).sum();
    total / trace.len() as f64
}

/// Sample mean and standard deviation (`n − 1` denominator; zero for one run).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        let n = v.len() as f64;
        if v.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() < 2 {
            0.0
        } else {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub seed: u64,
    pub metrics: Metrics,
    /// `J_p` of the paired tube-MPC run.
    pub tmpc_j_p: f64,
    /// `J_p` of the attack-free nominal run.
    pub nominal_j_p: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub j_p: Stat,
    pub accuracy: Stat,
    pub fp_count: Stat,
    pub fn_count: Stat,
    pub saving_vs_tmpc: Stat,
    pub tracking_error_vs_nominal: Stat,
    pub feasibility_failures: Stat,
    pub tmpc_j_p: Stat,
    pub nominal_j_p: Stat,
    pub final_norm: Stat,
    pub faults: usize,
}

impl Aggregate {
    fn of(rows: &[RunRow]) -> Self {
        let s = |f: fn(&RunRow) -> f64| Stat::of(rows.iter().map(f));
        Self {
            j_p: s(|r| r.metrics.j_p),
            accuracy: s(|r| r.metrics.accuracy),
            fp_count: s(|r| r.metrics.fp_count as f64),
            fn_count: s(|r| r.metrics.fn_count as f64),
            saving_vs_tmpc: s(|r| r.metrics.saving_vs_tmpc.unwrap_or(f64::NAN)),
            tracking_error_vs_nominal: s(|r| r.metrics.tracking_error_vs_nominal.unwrap_or(f64::NAN)),
            feasibility_failures: s(|r| r.metrics.feasibility_failures as f64),
            tmpc_j_p: s(|r| r.tmpc_j_p),
            nominal_j_p: s(|r| r.nominal_j_p),
            final_norm: s(|r| r.metrics.final_norm),
            faults: rows.iter().filter(|r| !r.metrics.completed).count(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloReport {
    pub controller: ControllerKind,
    pub runs: Vec<RunRow>,
    pub aggregate: Aggregate,
}

/// Designs once, then runs seeds `seed_base..seed_base + n_runs` in parallel.
///
/// Every run is paired with a tube-MPC run under the same attacks and noise and
/// with an attack-free nominal-MPC run under the same noise.
pub fn monte_carlo(scn: &Scenario, n_runs: usize, seed_base: u64) -> Result<MonteCarloReport, SimError> {
    let designs = Designs::new(scn)?;
    monte_carlo_with(scn, &designs.main, &designs.tmpc, &designs.nominal, n_runs, seed_base)
}

struct Designs {
    main: Design,
    tmpc: Design,
    nominal: Design,
}

impl Designs {
    fn new(scn: &Scenario) -> Result<Self, SimError> {
        Ok(Self {
            main: Design::new(scn, scn.controller)?,
            tmpc: Design::new(scn, ControllerKind::TubeMpc)?,
            nominal: Design::new(scn, ControllerKind::NominalMpc)?,
        })
    }
}

/// [`monte_carlo`] with prebuilt designs for the controller and both baselines.
pub fn monte_carlo_with(
    scn: &Scenario,
    main: &Design,
    tmpc: &Design,
    nominal: &Design,
    n_runs: usize,
    seed_base: u64,
) -> Result<MonteCarloReport, SimError> {
    if n_runs == 0 {
        return Err(SimError::Scenario("n_runs must be at least 1".into()));
    }
    let mut quiet = scn.clone();
    quiet.attack.trigger_mean = 0.0;
    let rows: Vec<Result<RunRow, SimError>> = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| {
            let seed = seed_base.wrapping_add(i);
            let trace = run_with_design(scn, main, seed)?;
            let base_t = run_with_design(scn, tmpc, seed)?;
            let base_n = run_with_design(&quiet, nominal, seed)?;
            let paired = |b: &SimTrace| (b.len() == trace.len()).then_some(b.clone());
            let (bt, bn) = (paired(&base_t), paired(&base_n));
            let metrics = compute_metrics(&trace, bt.as_ref(), bn.as_ref(), &scn.weights)?;
            Ok(RunRow {
                seed,
                metrics,
                tmpc_j_p: mean_cost(&base_t, &scn.weights),
                nominal_j_p: mean_cost(&base_n, &scn.weights),
            })
        })
        .collect();
    let runs = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(MonteCarloReport {
        controller: main.kind,
        aggregate: Aggregate::of(&runs),
        runs,
    })
}
