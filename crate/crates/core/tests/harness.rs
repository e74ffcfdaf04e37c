use std::process::Command;

use serde_json::{json, Value};

use gtstorm::config::{parse_config, RunConfig};
use gtstorm::harness::{self, Problem, SweepAxis, SweepSpec, Trend};
use gtstorm::metrics::CSV_HEADER;

fn config(value: Value) -> RunConfig {
    parse_config(&value.to_string()).unwrap()
}

fn quadratic(name: &str, iterations: usize, trials: usize) -> Value {
    json!({
        "topology": {"m": 4, "pc": 0.6, "seed": 2},
        "algorithm": {"name": name, "schedule": {"kind": "experiment", "eta0": 0.2}},
        "objective": {"kind": "quadratic", "synthetic": {"samples_per_node": 5, "dim": 3, "seed": 4}},
        "run": {"iterations": iterations, "trials": trials, "seed": 9}
    })
}

fn theory_quadratic(identical: bool, x0: Value) -> Value {
    json!({
        "topology": {"m": 4, "pc": 1.0, "seed": 0},
        "algorithm": {"name": "gt-storm",
                      "schedule": {"kind": "theory", "tau": 1.0, "c0": 4.0, "c1": 1.0, "audit_probes": 10}},
        "objective": {"kind": "quadratic",
                      "synthetic": {"samples_per_node": 5, "dim": 3, "seed": 8, "identical_centers": identical}},
        "run": {"iterations": 200, "trials": 10, "seed": 1, "x0": x0}
    })
}

#[test]
fn identical_config_gives_identical_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = quadratic("gt-storm", 50, 3);
    v["objective"] = json!({"kind": "logistic", "holdout": 0.2,
                            "synthetic": {"samples_per_node": 20, "dim": 5, "seed": 1}});
    let mut paths = Vec::new();
    for k in 0..2 {
        let mut c = config(v.clone());
        let path = dir.path().join(format!("run{k}.csv"));
        c.output.csv = Some(path.clone());
        harness::run_and_write(&c).unwrap();
        paths.push(path);
    }
    let a = std::fs::read(&paths[0]).unwrap();
    let b = std::fs::read(&paths[1]).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(text.lines().count(), 1 + 3 * 51);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert!(row[11].parse::<f64>().is_ok(), "test accuracy is recorded with a holdout");
}

#[test]
fn forced_identical_seeds_give_identical_rows() {
    let mut v = quadratic("gnsd", 30, 2);
    v["run"]["same_seed_trials"] = json!(true);
    let out = harness::run(&config(v)).unwrap();
    let strip = |t: usize| -> Vec<String> {
        out.trials[t]
            .records
            .iter()
            .map(|r| r.to_csv_row().split_once(',').unwrap().1.to_string())
            .collect()
    };
    assert_eq!(strip(0), strip(1));
    assert_eq!(out.summary.final_stationarity_std, 0.0);
}

#[test]
fn trials_differ_by_default() {
    let out = harness::run(&config(quadratic("dsgd", 30, 2))).unwrap();
    assert_ne!(out.trials[0].records.last(), out.trials[1].records.last());
}

#[test]
fn samples_and_communication_counters() {
    let m = 4;
    for (name, per_iter, vectors) in [("gt-storm", 2, 2), ("dsgd", 1, 1), ("gnsd", 1, 2)] {
        let out = harness::run(&config(quadratic(name, 25, 1))).unwrap();
        let problem = Problem::build(&config(quadratic(name, 25, 1))).unwrap();
        let degree_sum = problem.topology.degree_sum() as u64;
        for r in &out.trials[0].records {
            let t = r.t as u64;
            assert_eq!(r.samples_used, m + per_iter * m * t, "{name} t={t}");
            assert_eq!(r.comm_rounds, t);
            assert_eq!(r.comm_scalars, t * degree_sum * vectors * 3);
            assert_eq!(r.stationarity, r.grad_norm_sq + r.consensus_err);
        }
    }
}

#[test]
fn stride_controls_recorded_iterations() {
    let mut v = quadratic("gt-storm", 23, 1);
    v["run"]["stride"] = json!(10);
    let out = harness::run(&config(v)).unwrap();
    let ts: Vec<usize> = out.trials[0].records.iter().map(|r| r.t).collect();
    assert_eq!(ts, vec![0, 10, 20, 23]);
}

#[test]
fn check_mode_counts_assertions() {
    for name in ["gt-storm", "dsgd", "gnsd"] {
        let mut v = quadratic(name, 40, 2);
        v["run"]["check_mode"] = json!(true);
        let out = harness::run(&config(v)).unwrap();
        let checks = out.summary.checks.unwrap();
        assert!(checks.violations.is_empty());
        let per_iter = match name {
            "gt-storm" => 5,
            "gnsd" => 4,
            _ => 3,
        };
        assert_eq!(checks.passed, 2 * 40 * per_iter, "{name}");
    }
}

#[test]
fn common_optimum_start_is_stationary_under_theory_schedule() {
    let out = harness::run(&config(theory_quadratic(true, json!([0.0, 0.0, 0.0])))).unwrap();
    let theory = out.summary.theory.as_ref().unwrap();
    assert!(theory.report.passed);
    assert!(out.summary.curve.iter().filter(|c| c.t <= 200).any(|c| c.stationarity_mean <= 1e-8));
    assert!(out.summary.final_stationarity_mean <= 1e-8);
}

#[test]
fn theory_schedule_makes_progress_from_off_optimum_start() {
    let out = harness::run(&config(theory_quadratic(true, json!([1.0, -2.0, 0.5])))).unwrap();
    let curve = &out.summary.curve;
    assert!(curve.windows(2).all(|w| w[1].stationarity_mean <= w[0].stationarity_mean));
    assert!(curve.last().unwrap().stationarity_mean < curve[0].stationarity_mean);
}

#[test]
fn trial_averaged_potential_mostly_decreases() {
    let out = harness::run(&config(theory_quadratic(false, json!([1.0, -2.0, 0.5])))).unwrap();
    assert!(out.summary.theory.as_ref().unwrap().report.passed);
    let trials = &out.trials;
    let horizon = trials[0].records.len();
    let avg: Vec<f64> = (1..horizon)
        .map(|k| trials.iter().map(|t| t.records[k].potential.unwrap()).sum::<f64>() / trials.len() as f64)
        .collect();
    let steps = avg.len() - 1;
    let non_increasing = avg.windows(2).filter(|w| w[1] <= w[0]).count();
    assert!(
        non_increasing as f64 >= 0.95 * steps as f64,
        "{non_increasing} of {steps} steps non-increasing"
    );
}

#[test]
fn aborted_trials_flag_partial_completion() {
    let c = config(quadratic("gt-storm", 10, 2));
    let mut problem = Problem::build(&c).unwrap();
    problem.schedule = problem.schedule.with_horizon(4);
    let out = harness::run_problem(&problem, &c);
    assert!(out.summary.partial);
    assert_eq!(out.summary.completed_trials, 0);
    assert!(out.trials.iter().all(|t| t.error.as_deref().unwrap().contains("horizon")));
    assert_eq!(out.trials[0].records.last().unwrap().t, 4);
}

#[test]
fn sweep_writes_one_csv_per_value_and_reports_trend() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = config(quadratic("gt-storm", 20, 2));
    base.output.csv = Some(dir.path().join("sweep.csv"));
    base.output.summary = Some(dir.path().join("sweep.json"));
    let spec = SweepSpec {
        base,
        axis: SweepAxis::Pc,
        values: vec![0.35, 0.5, 0.9],
    };
    let summary = harness::sweep(&spec).unwrap();
    assert_eq!(summary.entries.len(), 3);
    for v in ["0.35", "0.5", "0.9"] {
        assert!(dir.path().join(format!("sweep_pc_{v}.csv")).exists());
    }
    let json: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(json["entries"].as_array().unwrap().len(), 3);
    assert!(json["final_stationarity_trend"].is_string());
    let _: Trend = summary.final_stationarity_trend;
}

#[test]
fn sweep_rejects_empty_and_invalid_values() {
    let base = config(quadratic("gt-storm", 5, 1));
    let empty = SweepSpec {
        base: base.clone(),
        axis: SweepAxis::Rho,
        values: vec![],
    };
    assert_eq!(empty.validate().unwrap_err().pointer, "/values");
    let bad_m = SweepSpec {
        base: base.clone(),
        axis: SweepAxis::M,
        values: vec![10.0, 2.5],
    };
    assert_eq!(bad_m.validate().unwrap_err().pointer, "/values/1");
    let bad_pc = SweepSpec {
        base,
        axis: SweepAxis::Pc,
        values: vec![1.5],
    };
    assert!(harness::sweep(&bad_pc).is_err());
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gtstorm")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = quadratic("gt-storm", 10, 2);
    v["output"] = json!({"csv": dir.path().join("out.csv"), "summary": dir.path().join("out.json")});
    let good = dir.path().join("good.json");
    std::fs::write(&good, v.to_string()).unwrap();
    let out = cli(&["--quiet", "--check", "run", "--config", good.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out.json")).unwrap()).unwrap();
    assert_eq!(summary["checks"]["passed"], json!(2 * 10 * 5));
    assert!(dir.path().join("out.csv").exists());

    let mut bad = v.clone();
    bad["algorithm"]["momentum"] = json!(0.9);
    let bad_path = dir.path().join("bad.json");
    std::fs::write(&bad_path, bad.to_string()).unwrap();
    let out = cli(&["--quiet", "run", "--config", bad_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/algorithm/momentum"));

    let out = cli(&["--quiet", "sweep", "--config", good.to_str().unwrap(), "--axis", "rho", "--values", ""]);
    assert_eq!(out.status.code(), Some(2));
    let out = cli(&["--quiet", "sweep", "--config", good.to_str().unwrap(), "--axis", "alpha", "--values", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cli(&["--quiet", "sweep", "--config", good.to_str().unwrap(), "--axis", "eta0", "--values", "0.05,0.1"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("out_eta0_0.05.csv").exists());
}
