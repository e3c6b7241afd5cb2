use std::fs;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rtmpc::attacks::run_probability;
use rtmpc::geometry::Polytope;
use rtmpc::sim::{
    compute_metrics, monte_carlo, run_with_design, ControllerKind, Design, Metrics, Scenario, SimTrace, Stat,
};
use serde_json::{json, Value};

use crate::config::{RunConfig, DEFAULT_OUT};
use crate::output::{config_hash, ensure_dir, flag, opt_real, real, write_json, Csv};
use crate::{CliError, Command, Common, SweepParam};

/// Parsed config plus everything derived from its text.
struct Loaded {
    cfg: RunConfig,
    scn: Scenario,
    text: String,
    out: PathBuf,
}

fn load(common: &Common) -> Result<Loaded, CliError> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", common.config.display())))?;
    let cfg = RunConfig::parse(&text)?;
    let scn = cfg.scenario()?;
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    Ok(Loaded { cfg, scn, text, out })
}

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::BufferLength(common) => buffer_length(&load(&common)?),
        Command::Synthesize { common, controller } => {
            let mut l = load(&common)?;
            if let Some(k) = controller {
                l.scn.controller = k.into();
            }
            synthesize(&l)
        }
        Command::Simulate {
            common,
            seed,
            controller,
        } => {
            let mut l = load(&common)?;
            if let Some(k) = controller {
                l.scn.controller = k.into();
            }
            if let Some(s) = seed {
                l.scn.seed = s;
            }
            simulate(&l)
        }
        Command::Montecarlo {
            common,
            runs,
            seed,
            controller,
        } => {
            let mut l = load(&common)?;
            if let Some(k) = controller {
                l.scn.controller = k.into();
            }
            let runs = runs.unwrap_or_else(|| l.cfg.runs());
            let seed = seed.unwrap_or(l.scn.seed);
            montecarlo(&l, runs, seed)
        }
        Command::Sweep {
            common,
            param,
            values,
            runs,
            seed,
            controller,
        } => {
            let l = load(&common)?;
            let runs = runs.unwrap_or_else(|| l.cfg.runs());
            let seed = seed.unwrap_or(l.scn.seed);
            let kinds: Vec<ControllerKind> = if controller.is_empty() {
                vec![l.scn.controller]
            } else {
                controller.into_iter().map(Into::into).collect()
            };
            sweep(&l, param, &values, &kinds, runs, seed)
        }
    }
}

fn check_runs(runs: usize) -> Result<(), CliError> {
    if runs == 0 {
        return Err(CliError::Config("--runs must be at least 1".into()));
    }
    Ok(())
}

fn buffer_length(l: &Loaded) -> Result<(), CliError> {
    let a = &l.scn.attack;
    let zeta = a.zeta().map_err(config_err)?;
    let p = a.joint_prob().map_err(config_err)?;
    let lambda = a.buffer_length().map_err(config_err)?;
    let top = (lambda + 1).min(a.horizon);
    let table: Vec<(usize, f64)> = (1..=top)
        .map(|b| run_probability(p, a.horizon, b).map(|v| (b, v)))
        .collect::<Result<_, _>>()
        .map_err(config_err)?;

    println!("over-threshold probability  zeta   = {zeta:.6}");
    println!("joint per-step probability  abar*zeta = {p:.6}");
    println!("horizon N = {}, significance alpha = {}", a.horizon, a.significance);
    println!("{:>4}  {:>14}", "b", "P(run >= b)");
    for (b, v) in &table {
        println!("{b:>4}  {v:>14.6e}");
    }
    println!("buffer length lambda = {lambda}");

    let hash = config_hash(&l.text, "buffer-length");
    let out = ensure_dir(&l.out)?;
    write_json(
        &out.join("buffer_length.json"),
        &json!({
            "config_sha256": hash,
            "zeta": zeta,
            "joint_probability": p,
            "horizon": a.horizon,
            "significance": a.significance,
            "run_probability": table.iter().map(|(b, v)| json!({"b": b, "p": v})).collect::<Vec<_>>(),
            "lambda": lambda,
        }),
    )
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("attack: {e}"))
}

fn matrix_json(m: &DMatrix<f64>) -> Value {
    json!((0..m.nrows()).map(|i| m.row(i).iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>())
}

fn vector_json(v: &DVector<f64>) -> Value {
    // adding zero maps -0.0 to 0.0
    json!(v.iter().map(|x| x + 0.0).collect::<Vec<_>>())
}

fn halfspaces(p: &Polytope) -> Value {
    json!({
        "normals": matrix_json(p.normals()),
        "offsets": vector_json(p.offsets()),
    })
}

fn synthesize(l: &Loaded) -> Result<(), CliError> {
    let kind = l.scn.controller;
    let design = Design::new(&l.scn, kind)?;
    let ing = &design.ingredients;
    let hash = config_hash(&l.text, &format!("synthesize controller={}", kind.as_str()));
    let out = ensure_dir(&l.out)?;
    let path = out.join("synthesis.json");
    write_json(
        &path,
        &json!({
            "config_sha256": hash,
            "controller": kind.as_str(),
            "A": matrix_json(&design.sys.a),
            "B": matrix_json(&design.sys.b),
            "K": matrix_json(&ing.k),
            "P": matrix_json(&ing.p),
            "terminal_scale": ing.terminal_scale,
            "alpha_term": ing.attack_offset,
            "xi": ing.terminal_steps,
            "mrpi": {"terms": ing.mrpi.terms, "alpha": ing.mrpi.alpha, "radius": ing.mrpi.radius},
            "W": halfspaces(&design.sys.w_set),
            "Z": halfspaces(&ing.z),
            "X_tight": halfspaces(&ing.x_tight),
            "U_tight": halfspaces(&ing.u_tight),
            "X_f": halfspaces(&ing.x_f),
            "lambda": design.lambda,
            "d_th": design.d_th,
        }),
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

fn metrics_json(m: &Metrics) -> Value {
    json!({
        "j_p": m.j_p,
        "accuracy": m.accuracy,
        "fp_count": m.fp_count,
        "fn_count": m.fn_count,
        "saving_vs_tmpc": m.saving_vs_tmpc,
        "tracking_error_vs_nominal": m.tracking_error_vs_nominal,
        "feasibility_failures": m.feasibility_failures,
        "state_violations": m.state_violations,
        "input_violations": m.input_violations,
        "final_norm": m.final_norm,
        "completed": m.completed,
    })
}

fn trace_csv(t: &SimTrace, hash: &str) -> Csv {
    let n = t.final_state.len();
    let m = t.steps.first().map_or(0, |s| s.u.len());
    let mut cols = vec!["step".to_string()];
    cols.extend((1..=n).map(|i| format!("x_{i}")));
    cols.extend((1..=n).map(|i| format!("xt_{i}")));
    cols.extend((1..=m).map(|i| format!("u_{i}")));
    cols.extend((1..=n).map(|i| format!("w_{i}")));
    cols.extend(
        ["attack_true", "over_threshold_true", "detected", "mode", "stage_cost", "ocp_value"].map(String::from),
    );
    let mut csv = Csv::new(hash, &cols);
    for (k, s) in t.steps.iter().enumerate() {
        let mut row = vec![k.to_string()];
        for v in [&s.x, &s.x_meas, &s.u, &s.w] {
            row.extend(v.iter().map(|&x| real(x)));
        }
        row.push(flag(s.attack_triggered).into());
        row.push(flag(s.over_threshold).into());
        row.push(flag(s.detected).into());
        row.push(s.mode.as_str().into());
        row.push(real(s.stage_cost));
        row.push(opt_real(s.ocp_value));
        csv.row(&row);
    }
    csv
}

fn simulate(l: &Loaded) -> Result<(), CliError> {
    let scn = &l.scn;
    let kind = scn.controller;
    let design = Design::new(scn, kind)?;
    let trace = run_with_design(scn, &design, scn.seed)?;

    // paired baselines: tube MPC under the same attacks, nominal MPC without them
    let tmpc = Design::new(scn, ControllerKind::TubeMpc)?;
    let base_t = run_with_design(scn, &tmpc, scn.seed)?;
    let mut quiet = scn.clone();
    quiet.attack.trigger_mean = 0.0;
    let nominal = Design::new(&quiet, ControllerKind::NominalMpc)?;
    let base_n = run_with_design(&quiet, &nominal, scn.seed)?;
    let paired = |b: &SimTrace| (b.len() == trace.len()).then(|| b.clone());
    let (bt, bn) = (paired(&base_t), paired(&base_n));
    let metrics = compute_metrics(&trace, bt.as_ref(), bn.as_ref(), &scn.weights)?;

    let hash = config_hash(&l.text, &format!("simulate controller={} seed={}", kind.as_str(), scn.seed));
    let out = ensure_dir(&l.out)?;
    trace_csv(&trace, &hash).write(&out.join("trace.csv"))?;
    write_json(
        &out.join("summary.json"),
        &json!({
            "config_sha256": hash,
            "controller": kind.as_str(),
            "seed": scn.seed,
            "n_sim": scn.n_sim,
            "steps_completed": trace.len(),
            "fault": trace.fault,
            "lambda": trace.lambda,
            "d_th": trace.d_th,
            "buffer_underflows": trace.buffer_underflows(),
            "final_state": vector_json(&trace.final_state),
            "metrics": metrics_json(&metrics),
            "tube_mpc_j_p": compute_metrics(&base_t, None, None, &scn.weights)?.j_p,
            "nominal_j_p": compute_metrics(&base_n, None, None, &scn.weights)?.j_p,
        }),
    )?;
    if let Some(f) = &trace.fault {
        eprintln!("controller fault after {} steps: {f}", trace.len());
    }
    println!("wrote {} and {}", out.join("trace.csv").display(), out.join("summary.json").display());
    Ok(())
}

fn stat_json(s: &Stat) -> Value {
    json!({"mean": s.mean, "std": s.std})
}

fn montecarlo(l: &Loaded, runs: usize, seed: u64) -> Result<(), CliError> {
    check_runs(runs)?;
    let kind = l.scn.controller;
    let rep = monte_carlo(&l.scn, runs, seed)?;
    let hash = config_hash(
        &l.text,
        &format!("montecarlo controller={} runs={runs} seed={seed}", kind.as_str()),
    );
    let out = ensure_dir(&l.out)?;
    let cols = [
        "seed",
        "j_p",
        "accuracy",
        "fp_count",
        "fn_count",
        "saving_vs_tmpc",
        "tracking_error_vs_nominal",
        "feasibility_failures",
        "state_violations",
        "input_violations",
        "final_norm",
        "completed",
        "tmpc_j_p",
        "nominal_j_p",
    ]
    .map(String::from);
    let mut csv = Csv::new(&hash, &cols);
    for r in &rep.runs {
        let m = &r.metrics;
        csv.row(&[
            r.seed.to_string(),
            real(m.j_p),
            real(m.accuracy),
            m.fp_count.to_string(),
            m.fn_count.to_string(),
            opt_real(m.saving_vs_tmpc),
            opt_real(m.tracking_error_vs_nominal),
            m.feasibility_failures.to_string(),
            m.state_violations.to_string(),
            m.input_violations.to_string(),
            real(m.final_norm),
            flag(m.completed).into(),
            real(r.tmpc_j_p),
            real(r.nominal_j_p),
        ]);
    }
    csv.write(&out.join("runs.csv"))?;
    let a = &rep.aggregate;
    write_json(
        &out.join("aggregate.json"),
        &json!({
            "config_sha256": hash,
            "controller": kind.as_str(),
            "runs": runs,
            "seed_base": seed,
            "faults": a.faults,
            "j_p": stat_json(&a.j_p),
            "accuracy": stat_json(&a.accuracy),
            "fp_count": stat_json(&a.fp_count),
            "fn_count": stat_json(&a.fn_count),
            "saving_vs_tmpc": stat_json(&a.saving_vs_tmpc),
            "tracking_error_vs_nominal": stat_json(&a.tracking_error_vs_nominal),
            "feasibility_failures": stat_json(&a.feasibility_failures),
            "tmpc_j_p": stat_json(&a.tmpc_j_p),
            "nominal_j_p": stat_json(&a.nominal_j_p),
            "final_norm": stat_json(&a.final_norm),
        }),
    )?;
    println!(
        "{runs} runs: J_p {:.4} (tube MPC {:.4}), accuracy {:.4}; wrote {}",
        a.j_p.mean,
        a.tmpc_j_p.mean,
        a.accuracy.mean,
        out.display()
    );
    Ok(())
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::Sigma => "sigma",
            SweepParam::Abar => "abar",
            SweepParam::Wbar => "wbar",
            SweepParam::Ath => "ath",
        }
    }

    fn apply(self, scn: &mut Scenario, v: f64) {
        match self {
            SweepParam::Sigma => scn.attack.amp_std = v,
            SweepParam::Abar => scn.attack.trigger_mean = v,
            SweepParam::Wbar => scn.w_bar.fill(v),
            SweepParam::Ath => scn.attack.threshold = v,
        }
    }
}

fn sweep(
    l: &Loaded,
    param: SweepParam,
    values: &[f64],
    kinds: &[ControllerKind],
    runs: usize,
    seed: u64,
) -> Result<(), CliError> {
    check_runs(runs)?;
    if values.is_empty() {
        return Err(CliError::Config("--values must list at least one value".into()));
    }
    // every point is validated before the first campaign starts
    let points: Vec<(f64, Scenario)> = values
        .iter()
        .map(|&v| {
            let mut s = l.scn.clone();
            param.apply(&mut s, v);
            s.validate()
                .map(|_| (v, s))
                .map_err(|e| CliError::Config(format!("{} = {v}: {e}", param.name())))
        })
        .collect::<Result<_, _>>()?;
    let names: Vec<&str> = kinds.iter().map(|k| k.as_str()).collect();
    let values_text: Vec<String> = values.iter().map(|&v| real(v)).collect();
    let hash = config_hash(
        &l.text,
        &format!(
            "sweep param={} values={} controllers={} runs={runs} seed={seed}",
            param.name(),
            values_text.join(";"),
            names.join(";")
        ),
    );
    let cols = [
        "param",
        "value",
        "controller",
        "runs",
        "j_p_mean",
        "j_p_std",
        "accuracy_mean",
        "accuracy_std",
        "saving_mean",
        "saving_std",
        "tracking_error_mean",
        "tracking_error_std",
        "tmpc_j_p_mean",
        "nominal_j_p_mean",
        "faults",
    ]
    .map(String::from);
    let mut csv = Csv::new(&hash, &cols);
    for (v, scn) in &points {
        for &kind in kinds {
            let mut s = scn.clone();
            s.controller = kind;
            let a = monte_carlo(&s, runs, seed)?.aggregate;
            csv.row(&[
                param.name().into(),
                real(*v),
                kind.as_str().into(),
                runs.to_string(),
                real(a.j_p.mean),
                real(a.j_p.std),
                real(a.accuracy.mean),
                real(a.accuracy.std),
                real(a.saving_vs_tmpc.mean),
                real(a.saving_vs_tmpc.std),
                real(a.tracking_error_vs_nominal.mean),
                real(a.tracking_error_vs_nominal.std),
                real(a.tmpc_j_p.mean),
                real(a.nominal_j_p.mean),
                a.faults.to_string(),
            ]);
            eprintln!("{} = {v}, {}: accuracy {:.4}, J_p {:.4}", param.name(), kind.as_str(), a.accuracy.mean, a.j_p.mean);
        }
    }
    let out = ensure_dir(&l.out)?;
    csv.write(&out.join("sweep.csv"))?;
    println!("wrote {}", out.join("sweep.csv").display());
    Ok(())
}
