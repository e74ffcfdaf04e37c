//! Builds a problem from a [`RunConfig`], runs trials and sweeps, and writes
//! CSV rows plus a JSON summary.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::algorithms::{self, AlgorithmError, AlgorithmKind, DecayExponent, Schedule, SwarmState};
use crate::checks::{CheckCounts, InvariantChecker, InvariantViolation};
use crate::config::{ConfigError, ObjectiveKind, RunConfig, ScheduleConfig};
use crate::data::{self, DataError, Dataset, PartitionMode};
use crate::metrics::{self, MetricsError, RunRecord, CSV_HEADER};
use crate::objectives::{
    audit_constants, node_streams, synthetic_quadratic, AuditedConstants, LogisticObjective, ObjectiveError,
    QuadraticObjective, Sampling, StochasticObjective,
};
use crate::theory::{self, ScheduleReport, TheoryError, TheoryParams, SMOOTHNESS_SAFETY};
use crate::topology::{self, MixingMatrix, Topology, TopologyError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Algorithm(#[from] AlgorithmError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Invariant(#[from] InvariantViolation),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl HarnessError {
    fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }
}

/// Theory-schedule details reported alongside a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryDetails {
    pub audited: AuditedConstants,
    pub params: TheoryParams,
    pub report: ScheduleReport,
}

/// Everything shared by the trials of one run.
pub struct Problem {
    pub kind: AlgorithmKind,
    pub topology: Topology,
    pub mixing: MixingMatrix,
    pub objective: Box<dyn StochasticObjective>,
    pub holdout: Option<Dataset>,
    pub schedule: Schedule,
    pub sampling: Sampling,
    pub theory: Option<TheoryDetails>,
    pub x0: Vec<f64>,
}

fn build_topology(config: &RunConfig) -> Result<Topology, HarnessError> {
    let t = &config.topology;
    match (&t.edge_list, t.m, t.pc) {
        (Some(path), _, _) => {
            let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
            Ok(Topology::parse_edge_list(BufReader::new(file))?)
        }
        (None, Some(m), Some(pc)) => Ok(topology::generate_erdos_renyi(m, pc, t.seed)?),
        _ => Err(ConfigError::new("/topology", "need edge_list or m and pc").into()),
    }
}

fn build_objective(
    config: &RunConfig,
    m: usize,
) -> Result<(Box<dyn StochasticObjective>, Option<Dataset>), HarnessError> {
    let o = &config.objective;
    match o.kind {
        ObjectiveKind::Quadratic => {
            let s = o
                .synthetic
                .as_ref()
                .ok_or_else(|| ConfigError::new("/objective/synthetic", "missing"))?;
            let obj = if s.identical_centers {
                QuadraticObjective::new(vec![vec![vec![0.0; s.dim]; s.samples_per_node]; m])?
            } else {
                synthetic_quadratic(m, s.dim, s.samples_per_node, s.seed)?
            };
            Ok((Box::new(obj), None))
        }
        ObjectiveKind::Logistic => {
            let (mut ds, split_seed) = match (&o.dataset, &o.synthetic) {
                (Some(path), _) => (data::load_libsvm(path, o.dim)?, 0),
                (None, Some(s)) => (data::synthetic_binary(s.samples_per_node * m, s.dim, s.seed), s.seed),
                (None, None) => return Err(ConfigError::new("/objective/synthetic", "missing").into()),
            };
            if o.scale_features {
                ds.scale_max_abs();
            }
            let (train, holdout) = if o.holdout > 0.0 {
                let (train, test) = ds.split_holdout(o.holdout, split_seed)?;
                (train, Some(test))
            } else {
                (ds, None)
            };
            let partition = match o.partition {
                PartitionMode::Iid => data::partition_iid(&train, m, split_seed)?,
                PartitionMode::NonIid => data::partition_by_label(&train, m, |s| usize::from(s.label))?,
            };
            let obj = LogisticObjective::from_partition(&train, &partition, o.alpha)?;
            Ok((Box::new(obj), holdout))
        }
    }
}

fn build_schedule(
    config: &RunConfig,
    obj: &dyn StochasticObjective,
    mixing: &MixingMatrix,
) -> Result<(Schedule, Option<TheoryDetails>), HarnessError> {
    let kind = config.algorithm.name;
    let horizon = config.run.iterations;
    match config.algorithm.schedule {
        ScheduleConfig::Experiment { eta0, exponent, rho } => {
            let exponent = exponent.unwrap_or(match kind {
                AlgorithmKind::GtStorm => DecayExponent::Third,
                AlgorithmKind::Dsgd | AlgorithmKind::Gnsd => DecayExponent::Half,
            });
            let rho = rho.unwrap_or(1.0 / (eta0 * eta0));
            Ok((Schedule::experiment(eta0, exponent, rho)?.with_horizon(horizon), None))
        }
        ScheduleConfig::Theory {
            tau,
            omega,
            c0,
            c1,
            audit_probes,
            audit_radius,
        } => {
            let audited = audit_constants(obj, audit_probes, audit_radius, config.topology.seed)?;
            // A zero audit (e.g. constant gradients) still needs a positive L.
            let l = (audited.l_hat * SMOOTHNESS_SAFETY).max(f64::MIN_POSITIVE);
            let mut params = theory::derive_constants(l, mixing.lambda(), c0, c1, tau)?;
            if let Some(omega) = omega {
                params = params.with_omega(omega);
            }
            let report = theory::validate_schedule(&params);
            if !report.passed {
                log::warn!(
                    "theory schedule fails: {}",
                    report.failures().map(|c| c.name).collect::<Vec<_>>().join("; ")
                );
            }
            let schedule = Schedule::theory(params.tau, params.omega, params.rho)?.with_horizon(horizon);
            Ok((
                schedule,
                Some(TheoryDetails {
                    audited,
                    params,
                    report,
                }),
            ))
        }
    }
}

impl Problem {
    pub fn build(config: &RunConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let topology = build_topology(config)?;
        let mixing = topology::build_mixing_matrix(&topology)?;
        let (objective, holdout) = build_objective(config, topology.node_count())?;
        let (schedule, theory) = build_schedule(config, objective.as_ref(), &mixing)?;
        let x0 = match &config.run.x0 {
            Some(x0) if x0.len() != objective.dim() => {
                return Err(ConfigError::new(
                    "/run/x0",
                    format!("length {} differs from dimension {}", x0.len(), objective.dim()),
                )
                .into())
            }
            Some(x0) => x0.clone(),
            None => vec![0.0; objective.dim()],
        };
        Ok(Self {
            kind: config.algorithm.name,
            topology,
            mixing,
            objective,
            holdout,
            schedule,
            sampling: Sampling::Random {
                batch: config.algorithm.batch,
            },
            theory,
            x0,
        })
    }
}

/// Rows and diagnostics of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub records: Vec<RunRecord>,
    pub checks: CheckCounts,
    /// Set when the trial stopped early.
    pub error: Option<String>,
    pub violation: Option<InvariantViolation>,
}

impl TrialResult {
    pub fn completed(&self) -> bool {
        self.error.is_none()
    }
}

/// Seed of trial `k` derived from the master seed.
pub fn trial_seed(master: u64, trial: usize, same_seed: bool) -> u64 {
    if same_seed {
        master
    } else {
        master.wrapping_add((trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

fn record(
    problem: &Problem,
    state: &SwarmState,
    trial: usize,
    samples_used: u64,
    c0: Option<f64>,
) -> Result<RunRecord, HarnessError> {
    let obj = problem.objective.as_ref();
    let t = state.t;
    let stat = metrics::stationarity_metric(state, obj)?;
    let (comm_rounds, comm_scalars) =
        metrics::communication_counters(problem.kind, problem.topology.degree_sum(), obj.dim(), t);
    let test_acc = problem
        .holdout
        .as_ref()
        .map(|h| metrics::state_accuracy(state, h))
        .transpose()?;
    let potential = match (c0, &problem.theory) {
        (Some(c0), Some(th)) if t >= 1 => Some(theory::potential(
            state,
            obj,
            problem.schedule.eta(t - 1),
            c0,
            th.params.l,
        )?),
        _ => None,
    };
    let beta = match problem.kind {
        AlgorithmKind::GtStorm if t >= 1 => problem.schedule.beta(t),
        _ => 0.0,
    };
    Ok(RunRecord {
        trial,
        t,
        eta: problem.schedule.eta(t),
        beta,
        global_loss: metrics::node_average_loss(state, obj)?,
        grad_norm_sq: stat.grad_norm_sq,
        consensus_err: stat.consensus_err,
        stationarity: stat.total,
        samples_used,
        comm_rounds,
        comm_scalars,
        test_acc,
        potential,
    })
}

/// Runs one trial; errors stop the trial and are kept in the result.
pub fn run_trial(problem: &Problem, config: &RunConfig, trial: usize) -> TrialResult {
    let seed = trial_seed(config.run.seed, trial, config.run.same_seed_trials);
    let mut result = TrialResult {
        trial,
        seed,
        records: Vec::new(),
        checks: CheckCounts::default(),
        error: None,
        violation: None,
    };
    if let Err(e) = run_trial_inner(problem, config, &mut result) {
        log::warn!("trial {trial} aborted: {e}");
        if let HarnessError::Invariant(v) = &e {
            result.violation = Some(v.clone());
        }
        result.error = Some(e.to_string());
    }
    result
}

fn run_trial_inner(problem: &Problem, config: &RunConfig, result: &mut TrialResult) -> Result<(), HarnessError> {
    let obj = problem.objective.as_ref();
    let m = obj.node_count();
    let c0 = match config.algorithm.schedule {
        ScheduleConfig::Theory { c0, .. } => Some(c0),
        ScheduleConfig::Experiment { .. } => None,
    };
    let mut rngs = node_streams(result.seed, m);
    let init = algorithms::init(problem.kind, obj, &problem.x0, &mut rngs, problem.sampling)?;
    let mut state = init.state;
    let mut samples_used = init.ifo_calls as u64;
    let mut checker = config
        .run
        .check_mode
        .then(|| InvariantChecker::new(&problem.mixing, config.run.check_c1));
    let stride = config.run.stride;
    let horizon = config.run.iterations;
    result.records.push(record(problem, &state, result.trial, samples_used, c0)?);
    for t in 1..=horizon {
        let before = checker.as_ref().map(|_| state.clone());
        let info = algorithms::step(
            problem.kind,
            &mut state,
            &problem.mixing,
            obj,
            &problem.schedule,
            &mut rngs,
            problem.sampling,
        )?;
        samples_used += info.ifo_calls as u64;
        if let (Some(checker), Some(before)) = (checker.as_mut(), before) {
            let outcome = checker.check_step(problem.kind, &before, &info, &state);
            result.checks = checker.counts.clone();
            outcome?;
        }
        if t % stride == 0 || t == horizon {
            result.records.push(record(problem, &state, result.trial, samples_used, c0)?);
        }
    }
    Ok(())
}

/// Trial-mean statistics at one recorded iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub t: usize,
    pub trials: usize,
    pub stationarity_mean: f64,
    pub stationarity_std: f64,
    pub loss_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_acc_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialStatus {
    pub trial: usize,
    pub seed: u64,
    pub completed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub algorithm: AlgorithmKind,
    pub nodes: usize,
    pub edges: usize,
    pub lambda: f64,
    pub dim: usize,
    pub iterations: usize,
    pub trials: usize,
    pub completed_trials: usize,
    pub partial: bool,
    pub trial_status: Vec<TrialStatus>,
    pub curve: Vec<CurvePoint>,
    pub final_t: usize,
    pub final_stationarity_mean: f64,
    pub final_stationarity_std: f64,
    pub final_loss_mean: f64,
    /// Trapezoidal area under the trial-mean stationarity curve.
    pub stationarity_auc: f64,
    pub samples_used: u64,
    pub comm_rounds: u64,
    pub comm_scalars: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checks: Option<CheckSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theory: Option<TheoryDetails>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckSummary {
    pub passed: usize,
    pub mean_identities: usize,
    pub contraction_inequalities: usize,
    pub violations: Vec<InvariantViolationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantViolationReport {
    pub trial: usize,
    pub t: usize,
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
}

pub struct RunOutput {
    pub trials: Vec<TrialResult>,
    pub summary: RunSummary,
}

impl RunOutput {
    pub fn records(&self) -> impl Iterator<Item = &RunRecord> {
        self.trials.iter().flat_map(|t| &t.records)
    }

    pub fn has_violation(&self) -> bool {
        self.trials.iter().any(|t| t.violation.is_some())
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in self.records() {
            out.push_str(&r.to_csv_row());
            out.push('\n');
        }
        out
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

fn summarize(problem: &Problem, config: &RunConfig, trials: &[TrialResult]) -> RunSummary {
    let mut ts: Vec<usize> = trials.iter().flat_map(|r| r.records.iter().map(|rec| rec.t)).collect();
    ts.sort_unstable();
    ts.dedup();
    let curve: Vec<CurvePoint> = ts
        .iter()
        .map(|&t| {
            let recs: Vec<&RunRecord> = trials
                .iter()
                .filter_map(|r| r.records.iter().find(|rec| rec.t == t))
                .collect();
            let stat: Vec<f64> = recs.iter().map(|r| r.stationarity).collect();
            let loss: Vec<f64> = recs.iter().map(|r| r.global_loss).collect();
            let acc: Option<Vec<f64>> = recs.iter().map(|r| r.test_acc).collect();
            let (stationarity_mean, stationarity_std) = mean_std(&stat);
            CurvePoint {
                t,
                trials: recs.len(),
                stationarity_mean,
                stationarity_std,
                loss_mean: mean_std(&loss).0,
                test_acc_mean: acc.filter(|a| !a.is_empty()).map(|a| mean_std(&a).0),
            }
        })
        .collect();
    let stationarity_auc = curve
        .windows(2)
        .map(|w| 0.5 * (w[0].stationarity_mean + w[1].stationarity_mean) * (w[1].t - w[0].t) as f64)
        .sum();
    let last = curve.last();
    let last_records: Vec<&RunRecord> = trials.iter().filter_map(|r| r.records.last()).collect();
    let checks = config.run.check_mode.then(|| {
        let mut counts = CheckCounts::default();
        trials.iter().for_each(|r| counts.merge(&r.checks));
        CheckSummary {
            passed: counts.total() - trials.iter().filter(|r| r.violation.is_some()).count(),
            mean_identities: counts.mean_identities,
            contraction_inequalities: counts.contraction_inequalities,
            violations: trials
                .iter()
                .filter_map(|r| {
                    r.violation.as_ref().map(|v| InvariantViolationReport {
                        trial: r.trial,
                        t: v.t,
                        name: v.name,
                        lhs: v.lhs,
                        rhs: v.rhs,
                    })
                })
                .collect(),
        }
    });
    let completed_trials = trials.iter().filter(|r| r.completed()).count();
    RunSummary {
        algorithm: problem.kind,
        nodes: problem.topology.node_count(),
        edges: problem.topology.edge_count(),
        lambda: problem.mixing.lambda(),
        dim: problem.objective.dim(),
        iterations: config.run.iterations,
        trials: trials.len(),
        completed_trials,
        partial: completed_trials < trials.len(),
        trial_status: trials
            .iter()
            .map(|r| TrialStatus {
                trial: r.trial,
                seed: r.seed,
                completed: r.completed(),
                error: r.error.clone(),
            })
            .collect(),
        final_t: last.map_or(0, |c| c.t),
        final_stationarity_mean: last.map_or(f64::NAN, |c| c.stationarity_mean),
        final_stationarity_std: last.map_or(f64::NAN, |c| c.stationarity_std),
        final_loss_mean: last.map_or(f64::NAN, |c| c.loss_mean),
        stationarity_auc,
        samples_used: last_records.iter().map(|r| r.samples_used).max().unwrap_or(0),
        comm_rounds: last_records.iter().map(|r| r.comm_rounds).max().unwrap_or(0),
        comm_scalars: last_records.iter().map(|r| r.comm_scalars).max().unwrap_or(0),
        curve,
        checks,
        theory: problem.theory.clone(),
    }
}

/// Runs every trial of `config` (in parallel) without touching the filesystem.
pub fn run(config: &RunConfig) -> Result<RunOutput, HarnessError> {
    let problem = Problem::build(config)?;
    Ok(run_problem(&problem, config))
}

/// Runs every trial of `config` on an already built problem.
pub fn run_problem(problem: &Problem, config: &RunConfig) -> RunOutput {
    log::info!(
        "{} on {} nodes, {} edges, lambda={:.4}, p={}",
        problem.kind.name(),
        problem.topology.node_count(),
        problem.topology.edge_count(),
        problem.mixing.lambda(),
        problem.objective.dim()
    );
    let trials: Vec<TrialResult> = (0..config.run.trials)
        .into_par_iter()
        .map(|k| run_trial(problem, config, k))
        .collect();
    let summary = summarize(problem, config, &trials);
    RunOutput { trials, summary }
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let mut f = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| HarnessError::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("summary types serialize") + "\n"
}

/// Runs `config` and writes the configured CSV and summary files.
pub fn run_and_write(config: &RunConfig) -> Result<RunOutput, HarnessError> {
    let out = run(config)?;
    if let Some(path) = &config.output.csv {
        write_file(path, &out.csv())?;
    }
    if let Some(path) = &config.output.summary {
        write_file(path, &to_json(&out.summary))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Pc,
    M,
    Rho,
    Eta0,
}

impl std::str::FromStr for SweepAxis {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pc" => Ok(SweepAxis::Pc),
            "m" => Ok(SweepAxis::M),
            "rho" => Ok(SweepAxis::Rho),
            "eta0" => Ok(SweepAxis::Eta0),
            other => Err(ConfigError::new("/axis", format!("unknown axis {other:?}; expected pc, m, rho or eta0"))),
        }
    }
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Pc => "pc",
            SweepAxis::M => "m",
            SweepAxis::Rho => "rho",
            SweepAxis::Eta0 => "eta0",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: RunConfig,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// Parses a comma-separated value list.
pub fn parse_values(text: &str) -> Result<Vec<f64>, ConfigError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .enumerate()
        .map(|(i, s)| {
            s.parse::<f64>()
                .map_err(|e| ConfigError::new(format!("/values/{i}"), format!("{s:?}: {e}")))
        })
        .collect()
}

impl SweepSpec {
    /// Config for one axis value; the pointer names the offending index.
    pub fn config_for(&self, index: usize) -> Result<RunConfig, ConfigError> {
        let value = self.values[index];
        let pointer = format!("/values/{index}");
        let mut c = self.base.clone();
        match self.axis {
            SweepAxis::Pc => {
                if c.topology.edge_list.is_some() {
                    return Err(ConfigError::new("/topology/edge_list", "pc sweep needs a random topology"));
                }
                c.topology.pc = Some(value);
            }
            SweepAxis::M => {
                if c.topology.edge_list.is_some() {
                    return Err(ConfigError::new("/topology/edge_list", "m sweep needs a random topology"));
                }
                if value.fract() != 0.0 || value < 2.0 {
                    return Err(ConfigError::new(pointer, format!("node count must be an integer >= 2, got {value}")));
                }
                c.topology.m = Some(value as usize);
            }
            SweepAxis::Rho | SweepAxis::Eta0 => match &mut c.algorithm.schedule {
                ScheduleConfig::Experiment { eta0, rho, .. } => {
                    if self.axis == SweepAxis::Rho {
                        *rho = Some(value);
                    } else {
                        *eta0 = value;
                    }
                }
                ScheduleConfig::Theory { .. } => {
                    return Err(ConfigError::new(
                        "/algorithm/schedule/kind",
                        format!("{} sweep needs the experiment schedule", self.axis.name()),
                    ))
                }
            },
        }
        c.validate().map_err(|e| ConfigError::new(pointer, e.to_string()))?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<Vec<RunConfig>, ConfigError> {
        if self.values.is_empty() {
            return Err(ConfigError::new("/values", "value list is empty"));
        }
        (0..self.values.len()).map(|i| self.config_for(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trend {
    Increasing,
    Decreasing,
    Constant,
    Mixed,
}

/// Direction of `ys` as the axis value grows (reported, never asserted).
pub fn monotone_trend(ys: &[f64]) -> Trend {
    let diffs: Vec<f64> = ys.windows(2).map(|w| w[1] - w[0]).collect();
    if diffs.iter().all(|&d| d == 0.0) {
        Trend::Constant
    } else if diffs.iter().all(|&d| d >= 0.0) {
        Trend::Increasing
    } else if diffs.iter().all(|&d| d <= 0.0) {
        Trend::Decreasing
    } else {
        Trend::Mixed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub entries: Vec<SweepEntry>,
    /// Trend of final trial-mean stationarity along the axis.
    pub final_stationarity_trend: Trend,
}

/// Per-value CSV path: `<stem>_<axis>_<value>.csv` next to the base CSV.
fn value_csv_path(base: &Path, axis: SweepAxis, value: f64) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    base.with_file_name(format!("{stem}_{}_{value}.csv", axis.name()))
}

/// Runs the base config once per axis value with seeds held fixed, writing
/// per-value CSVs and the combined summary where the base config says so.
pub fn sweep(spec: &SweepSpec) -> Result<SweepSummary, HarnessError> {
    let configs = spec.validate()?;
    let mut entries = Vec::with_capacity(configs.len());
    for (mut c, &value) in configs.into_iter().zip(&spec.values) {
        let csv = spec.base.output.csv.as_ref().map(|p| value_csv_path(p, spec.axis, value));
        c.output.csv = csv.clone();
        c.output.summary = None;
        log::info!("sweep {}={value}", spec.axis.name());
        let out = run_and_write(&c)?;
        entries.push(SweepEntry {
            value,
            csv,
            summary: out.summary,
        });
    }
    let finals: Vec<f64> = entries.iter().map(|e| e.summary.final_stationarity_mean).collect();
    let summary = SweepSummary {
        axis: spec.axis,
        values: spec.values.clone(),
        final_stationarity_trend: monotone_trend(&finals),
        entries,
    };
    if let Some(path) = &spec.base.output.summary {
        write_file(path, &to_json(&summary))?;
    }
    Ok(summary)
}
