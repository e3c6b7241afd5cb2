use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn rtmpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtmpc")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn repo_config(name: &str) -> String {
    format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

/// Short MSD scenario for fast runs.
const SHORT: &str = "preset = \"msd\"\n[simulation]\nsteps = 40\n";

#[test]
fn buffer_length_reports_the_campaign_numbers() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = rtmpc(&["buffer-length", "--config", &repo_config("msd.toml"), "--out", out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("0.841481") && text.contains("0.168296"), "{text}");
    let j = json(&tmp.path().join("buffer_length.json"));
    assert_eq!(j["lambda"], 6);
    let table = j["run_probability"].as_array().unwrap();
    assert_eq!(table.len(), 7);
    assert!(table[5]["p"].as_f64().unwrap() < 0.01 && table[4]["p"].as_f64().unwrap() >= 0.01);
}

#[test]
fn no_attacks_need_a_single_slot() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "a.toml", "preset = \"msd\"\n[attack]\ntrigger_mean = 0.0\n");
    let o = rtmpc(&["buffer-length", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(json(&tmp.path().join("buffer_length.json"))["lambda"], 1);
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    let cases = [
        ("malformed number", "preset = \"msd\"\n[attack]\namp_std = 2.0.0\n", "line 3"),
        ("unknown key", "preset = \"msd\"\n[attack]\namp_sd = 2.0\n", "amp_sd"),
        ("zero steps", "preset = \"msd\"\n[simulation]\nsteps = 0\n", "n_sim"),
        ("probability out of range", "preset = \"msd\"\n[attack]\ntrigger_mean = 1.5\n", "trigger"),
    ];
    for (what, text, needle) in cases {
        let cfg = write_config(tmp.path(), "bad.toml", text);
        let o = rtmpc(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out]);
        assert_eq!(code(&o), 2, "{what}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{what}: {}", stderr(&o));
    }
    let o = rtmpc(&["simulate", "--config", "/nonexistent/config.toml"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn synthesis_report_and_failures() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("s");
    let o = rtmpc(&["synthesize", "--config", &repo_config("msd.toml"), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = json(&out.join("synthesis.json"));
    assert_eq!(j["K"].as_array().unwrap().len(), 1);
    assert_eq!(j["K"][0].as_array().unwrap().len(), 2);
    assert!(j["alpha_term"].as_f64().unwrap() >= 0.0);
    assert_eq!(j["Z"]["normals"].as_array().unwrap().len(), j["Z"]["offsets"].as_array().unwrap().len());
    assert_eq!(j["xi"], 0);

    let quiet = write_config(tmp.path(), "w0.toml", "preset = \"msd\"\n[system]\nw_bar = [0.0, 0.0]\n");
    let o = rtmpc(&["synthesize", "--config", quiet.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let z = &json(&out.join("synthesis.json"))["Z"]["offsets"];
    assert!(z.as_array().unwrap().iter().all(|v| v.as_f64() == Some(0.0)), "{z}");

    let stuck = write_config(tmp.path(), "u0.toml", "preset = \"msd\"\n[system]\nu_max = [0.0]\n");
    let o = rtmpc(&["synthesize", "--config", stuck.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("U_tight"), "{}", stderr(&o));
}

#[test]
fn simulate_writes_an_exact_reproducible_trace() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SHORT);
    let run = |dir: &str| {
        let out = tmp.path().join(dir);
        let o = rtmpc(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        (fs::read(out.join("trace.csv")).unwrap(), fs::read(out.join("summary.json")).unwrap())
    };
    let first = run("a");
    assert_eq!(first, run("b"));

    let text = String::from_utf8(first.0).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_sha256="));
    assert_eq!(
        lines.next().unwrap(),
        "step,x_1,x_2,xt_1,xt_2,u_1,w_1,w_2,attack_true,over_threshold_true,detected,mode,stage_cost,ocp_value"
    );
    assert_eq!(lines.count(), 40);
    assert!(!text.contains('\r'));
    let row: Vec<&str> = text.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(row[1], "2.0000000000000000e0");
}

#[test]
fn seed_and_controller_flags_change_the_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "preset = \"msd\"\n");
    let summary = |extra: &[&str], dir: &str| {
        let out = tmp.path().join(dir);
        let mut args = vec!["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = rtmpc(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        json(&out.join("summary.json"))
    };
    let resilient = summary(&["--seed", "3"], "r");
    let nominal = summary(&["--seed", "3", "--controller", "nominal-mpc"], "n");
    assert_eq!(nominal["controller"], "nominal-mpc");
    assert_ne!(resilient["config_sha256"], nominal["config_sha256"]);
    let j = |v: &Value| v["metrics"]["j_p"].as_f64().unwrap();
    assert!(j(&nominal) > j(&resilient), "{} vs {}", j(&nominal), j(&resilient));
}

#[test]
fn montecarlo_single_run_and_repeatability() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SHORT);
    let run = |runs: &str, dir: &str| {
        let out = tmp.path().join(dir);
        let o = rtmpc(&["montecarlo", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--runs", runs, "--seed", "5"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    };
    let one = run("1", "one");
    let agg = json(&one.join("aggregate.json"));
    assert_eq!(agg["j_p"]["std"].as_f64(), Some(0.0));
    let runs = fs::read_to_string(one.join("runs.csv")).unwrap();
    let row: Vec<&str> = runs.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(row[0], "5");
    assert_eq!(row[1].parse::<f64>().unwrap(), agg["j_p"]["mean"].as_f64().unwrap());

    let a = run("4", "a");
    let b = run("4", "b");
    for f in ["runs.csv", "aggregate.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(fs::read_to_string(a.join("runs.csv")).unwrap().lines().count(), 6);
}

#[test]
fn montecarlo_campaign_detects_attacks() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = rtmpc(&["montecarlo", "--config", &repo_config("msd.toml"), "--out", out, "--runs", "20"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let agg = json(&tmp.path().join("aggregate.json"));
    assert!(agg["accuracy"]["mean"].as_f64().unwrap() >= 0.97);
    assert_eq!(agg["runs"], 20);
}

#[test]
fn sweep_rows_and_argument_errors() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SHORT);
    let c = cfg.to_str().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = rtmpc(&[
        "sweep", "--config", c, "--out", out, "--param", "ath", "--values", "0.5,4", "--runs", "3",
        "--controller", "resilient-tube-mpc", "--controller", "tube-mpc",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("ath,5.0000000000000000e-1,resilient-tube-mpc,3,"));
    assert!(rows[3].starts_with("ath,4.0000000000000000e0,tube-mpc,3,"));

    for args in [
        vec!["--param", "gamma", "--values", "1"],
        vec!["--param", "ath", "--values", ""],
        vec!["--param", "ath"],
        vec!["--param", "abar", "--values", "1.5"],
    ] {
        let mut full = vec!["sweep", "--config", c, "--out", out];
        full.extend(args.iter());
        let o = rtmpc(&full);
        assert_eq!(code(&o), 2, "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn shipped_configs_are_accepted() {
    for name in ["msd.toml", "unicycle.toml"] {
        let tmp = TempDir::new().unwrap();
        let o = rtmpc(&["buffer-length", "--config", &repo_config(name), "--out", tmp.path().to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{name}: {}", stderr(&o));
    }
}
