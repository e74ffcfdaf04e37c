//! GT-STORM and the DSGD / GNSD baselines on stacked node state.
//!
//! All steppers run synchronous rounds: every mixing sum reads the node values
//! from before the round, and results go to fresh buffers. Each node consumes
//! only its own random stream, so the trajectory is a pure function of the
//! per-node seeds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objectives::{batch_gradient, draw_samples, NodeRng, ObjectiveError, Sampling, StochasticObjective};
use crate::topology::MixingMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgorithmError {
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("iteration {t} exceeds the schedule horizon {horizon}")]
    ScheduleExhausted { t: usize, horizon: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("state mismatch: {0}")]
    StateMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmKind {
    GtStorm,
    Dsgd,
    Gnsd,
}

impl AlgorithmKind {
    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::GtStorm => "gt-storm",
            AlgorithmKind::Dsgd => "dsgd",
            AlgorithmKind::Gnsd => "gnsd",
        }
    }

    /// Number of p-vectors each node sends to each neighbour per round.
    pub fn vectors_per_round(self) -> usize {
        match self {
            AlgorithmKind::Dsgd => 1,
            AlgorithmKind::GtStorm | AlgorithmKind::Gnsd => 2,
        }
    }

    /// Stochastic gradient evaluations per drawn sample in one iteration.
    pub fn evaluations_per_sample(self) -> usize {
        match self {
            AlgorithmKind::GtStorm => 2,
            AlgorithmKind::Dsgd | AlgorithmKind::Gnsd => 1,
        }
    }
}

impl std::str::FromStr for AlgorithmKind {
    type Err = AlgorithmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gt-storm" => Ok(AlgorithmKind::GtStorm),
            "dsgd" => Ok(AlgorithmKind::Dsgd),
            "gnsd" => Ok(AlgorithmKind::Gnsd),
            other => Err(AlgorithmError::InvalidParameter(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// `tau / (omega + t)^(1/3)`.
pub fn theory_eta(tau: f64, omega: f64, t: usize) -> Result<f64, AlgorithmError> {
    if !(tau > 0.0) || !(omega >= 2.0) {
        return Err(AlgorithmError::InvalidParameter(format!(
            "need tau > 0 and omega >= 2, got tau={tau}, omega={omega}"
        )));
    }
    Ok(tau / (omega + t as f64).cbrt())
}

/// `clamp(1 - rho * eta_prev^2, 0, 1)`.
pub fn theory_beta(rho: f64, eta_prev: f64) -> f64 {
    (1.0 - rho * eta_prev * eta_prev).clamp(0.0, 1.0)
}

/// Decay exponent of the experiment step-size rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayExponent {
    /// `t^(-1/2)`, used for DSGD and GNSD.
    #[serde(rename = "1/2")]
    Half,
    /// `t^(-1/3)`, used for GT-STORM.
    #[serde(rename = "1/3")]
    Third,
}

impl DecayExponent {
    pub fn value(self) -> f64 {
        match self {
            DecayExponent::Half => 0.5,
            DecayExponent::Third => 1.0 / 3.0,
        }
    }
}

/// `eta0 * (1 + 0.1 t)^(-exponent)`.
pub fn experiment_eta(eta0: f64, exponent: DecayExponent, t: usize) -> f64 {
    let base = 1.0 + 0.1 * t as f64;
    match exponent {
        DecayExponent::Half => eta0 / base.sqrt(),
        DecayExponent::Third => eta0 / base.cbrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EtaRule {
    Theory { tau: f64, omega: f64 },
    Experiment { eta0: f64, exponent: DecayExponent },
    Constant { eta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentumRule {
    /// `beta_{t+1} = clamp(1 - rho eta_t^2, 0, 1)`.
    Rho(f64),
    /// Fixed beta in `[0, 1]` for every iteration.
    Fixed(f64),
}

/// Step-size and momentum schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub eta: EtaRule,
    pub momentum: MomentumRule,
    pub horizon: Option<usize>,
}

impl Schedule {
    pub fn theory(tau: f64, omega: f64, rho: f64) -> Result<Self, AlgorithmError> {
        theory_eta(tau, omega, 0)?;
        Self::new(EtaRule::Theory { tau, omega }, MomentumRule::Rho(rho))
    }

    pub fn experiment(eta0: f64, exponent: DecayExponent, rho: f64) -> Result<Self, AlgorithmError> {
        Self::new(EtaRule::Experiment { eta0, exponent }, MomentumRule::Rho(rho))
    }

    pub fn constant(eta: f64, beta: f64) -> Result<Self, AlgorithmError> {
        Self::new(EtaRule::Constant { eta }, MomentumRule::Fixed(beta))
    }

    pub fn new(eta: EtaRule, momentum: MomentumRule) -> Result<Self, AlgorithmError> {
        let eta_ok = match eta {
            EtaRule::Theory { tau, omega } => tau > 0.0 && omega >= 2.0,
            EtaRule::Experiment { eta0, .. } => eta0 > 0.0,
            EtaRule::Constant { eta } => eta >= 0.0,
        };
        if !eta_ok {
            return Err(AlgorithmError::InvalidParameter(format!("bad step-size rule {eta:?}")));
        }
        let momentum_ok = match momentum {
            MomentumRule::Rho(rho) => rho > 0.0 && rho.is_finite(),
            MomentumRule::Fixed(b) => (0.0..=1.0).contains(&b),
        };
        if !momentum_ok {
            return Err(AlgorithmError::InvalidParameter(format!("bad momentum rule {momentum:?}")));
        }
        Ok(Self {
            eta,
            momentum,
            horizon: None,
        })
    }

    pub fn with_fixed_beta(mut self, beta: f64) -> Result<Self, AlgorithmError> {
        Self::new(self.eta, MomentumRule::Fixed(beta))?;
        self.momentum = MomentumRule::Fixed(beta);
        Ok(self)
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = Some(horizon);
        self
    }

    /// Step size `eta_t`.
    pub fn eta(&self, t: usize) -> f64 {
        match self.eta {
            EtaRule::Theory { tau, omega } => tau / (omega + t as f64).cbrt(),
            EtaRule::Experiment { eta0, exponent } => experiment_eta(eta0, exponent, t),
            EtaRule::Constant { eta } => eta,
        }
    }

    /// Momentum weight `beta_t` for `t >= 1`, computed from `eta_{t-1}`.
    pub fn beta(&self, t: usize) -> f64 {
        match self.momentum {
            MomentumRule::Rho(rho) => theory_beta(rho, self.eta(t.saturating_sub(1))),
            MomentumRule::Fixed(b) => b,
        }
    }

    fn check_horizon(&self, t: usize) -> Result<(), AlgorithmError> {
        match self.horizon {
            Some(horizon) if t > horizon => Err(AlgorithmError::ScheduleExhausted { t, horizon }),
            _ => Ok(()),
        }
    }
}

/// Stacked per-node state.
///
/// `v` is the GT-STORM estimator; for DSGD and GNSD it holds the node's latest
/// stochastic gradient. `y` is the GNSD tracker.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub x: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub y: Option<Vec<Vec<f64>>>,
    pub prev_x: Vec<Vec<f64>>,
    pub t: usize,
}

impl SwarmState {
    pub fn node_count(&self) -> usize {
        self.x.len()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// Vector each node moves along in the next parameter update.
    pub fn direction(&self) -> &[Vec<f64>] {
        self.y.as_deref().unwrap_or(&self.v)
    }

    fn validate(&self, w: &MixingMatrix, obj: &dyn StochasticObjective, rngs: &[NodeRng]) -> Result<(), AlgorithmError> {
        let m = self.node_count();
        if w.node_count() != m || obj.node_count() != m || rngs.len() != m {
            return Err(AlgorithmError::StateMismatch(format!(
                "state has {m} nodes, mixing {}, objective {}, streams {}",
                w.node_count(),
                obj.node_count(),
                rngs.len()
            )));
        }
        let p = obj.dim();
        let blocks = self.x.iter().chain(&self.v).chain(&self.prev_x).chain(self.y.iter().flatten());
        if let Some(bad) = blocks.map(Vec::len).find(|&len| len != p) {
            return Err(AlgorithmError::Objective(ObjectiveError::DimensionMismatch { expected: p, got: bad }));
        }
        Ok(())
    }
}

/// What happened in one iteration, kept for metrics and invariant checks.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    /// Index of the iterate produced by this step.
    pub t: usize,
    /// Step size used in the parameter update.
    pub eta: f64,
    /// Momentum weight used in the estimator update (0 for baselines).
    pub beta: f64,
    /// Fresh stochastic gradients at the new iterates.
    pub u: Vec<Vec<f64>>,
    /// Same-sample differences `u - grad f_i(x_prev; same samples)`; GT-STORM only.
    pub w: Option<Vec<Vec<f64>>>,
    /// Sample-gradient evaluations spent in this step across all nodes.
    pub ifo_calls: usize,
}

/// Result of drawing the initial stochastic gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Initialized {
    pub state: SwarmState,
    pub ifo_calls: usize,
}

fn initial_gradients(
    obj: &dyn StochasticObjective,
    x0: &[f64],
    rngs: &mut [NodeRng],
    sampling: Sampling,
) -> Result<(Vec<Vec<f64>>, usize), AlgorithmError> {
    if x0.len() != obj.dim() {
        return Err(ObjectiveError::DimensionMismatch {
            expected: obj.dim(),
            got: x0.len(),
        }
        .into());
    }
    if rngs.len() != obj.node_count() {
        return Err(AlgorithmError::StateMismatch(format!(
            "{} streams for {} nodes",
            rngs.len(),
            obj.node_count()
        )));
    }
    let mut ifo = 0;
    let grads = rngs
        .iter_mut()
        .enumerate()
        .map(|(node, rng)| {
            let handles = draw_samples(obj, node, rng, sampling)?;
            ifo += handles.len();
            batch_gradient(obj, node, &handles, x0)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((grads, ifo))
}

/// Every node starts at `x0` with `v_i` a stochastic gradient at `x0`.
pub fn init_gt_storm(
    obj: &dyn StochasticObjective,
    x0: &[f64],
    rngs: &mut [NodeRng],
    sampling: Sampling,
) -> Result<Initialized, AlgorithmError> {
    let (v, ifo_calls) = initial_gradients(obj, x0, rngs, sampling)?;
    let x = vec![x0.to_vec(); v.len()];
    Ok(Initialized {
        state: SwarmState {
            prev_x: x.clone(),
            x,
            v,
            y: None,
            t: 0,
        },
        ifo_calls,
    })
}

/// DSGD keeps the latest stochastic gradient in `v`; initialization matches GT-STORM.
pub fn init_dsgd(
    obj: &dyn StochasticObjective,
    x0: &[f64],
    rngs: &mut [NodeRng],
    sampling: Sampling,
) -> Result<Initialized, AlgorithmError> {
    init_gt_storm(obj, x0, rngs, sampling)
}

/// GNSD starts its tracker at the initial stochastic gradient, `y_0 = g_0`.
pub fn init_gnsd(
    obj: &dyn StochasticObjective,
    x0: &[f64],
    rngs: &mut [NodeRng],
    sampling: Sampling,
) -> Result<Initialized, AlgorithmError> {
    let mut init = init_gt_storm(obj, x0, rngs, sampling)?;
    init.state.y = Some(init.state.v.clone());
    Ok(init)
}

pub fn init(
    kind: AlgorithmKind,
    obj: &dyn StochasticObjective,
    x0: &[f64],
    rngs: &mut [NodeRng],
    sampling: Sampling,
) -> Result<Initialized, AlgorithmError> {
    match kind {
        AlgorithmKind::GtStorm => init_gt_storm(obj, x0, rngs, sampling),
        AlgorithmKind::Dsgd => init_dsgd(obj, x0, rngs, sampling),
        AlgorithmKind::Gnsd => init_gnsd(obj, x0, rngs, sampling),
    }
}

/// `sum_j W_ij x_j - eta d_i` for every node.
fn consensus_descent(w: &MixingMatrix, x: &[Vec<f64>], dir: &[Vec<f64>], eta: f64) -> Vec<Vec<f64>> {
    let mut mixed = w.mix(x);
    for (xi, di) in mixed.iter_mut().zip(dir) {
        xi.iter_mut().zip(di).for_each(|(a, b)| *a -= eta * b);
    }
    mixed
}

/// One GT-STORM round, advancing the state from iteration `t-1` to `t`:
///
/// ```text
/// x_t = W x_{t-1} - eta_{t-1} v_{t-1}
/// v_t = beta_t W v_{t-1} + grad f_i(x_t; z_t) - beta_t grad f_i(x_{t-1}; z_t)
/// ```
///
/// Both gradients in the estimator update use the same drawn samples `z_t`.
pub fn gt_storm_step(
    state: &mut SwarmState,
    w: &MixingMatrix,
    obj: &dyn StochasticObjective,
    sched: &Schedule,
    rngs: &mut [NodeRng],
    sampling: Sampling,
) -> Result<StepInfo, AlgorithmError> {
    state.validate(w, obj, rngs)?;
    let t = state.t + 1;
    sched.check_horizon(t)?;
    let eta = sched.eta(t - 1);
    let beta = sched.beta(t);

    let new_x = consensus_descent(w, &state.x, &state.v, eta);
    let mixed_v = w.mix(&state.v);
    let m = state.node_count();
    let mut new_v = Vec::with_capacity(m);
    let mut u = Vec::with_capacity(m);
    let mut diffs = Vec::with_capacity(m);
    let mut ifo_calls = 0;
    for (node, rng) in rngs.iter_mut().enumerate() {
        let handles = draw_samples(obj, node, rng, sampling)?;
        let fresh = batch_gradient(obj, node, &handles, &new_x[node])?;
        let stale = batch_gradient(obj, node, &handles, &state.x[node])?;
        ifo_calls += 2 * handles.len();
        let vi: Vec<f64> = mixed_v[node]
            .iter()
            .zip(&fresh)
            .zip(&stale)
            .map(|((mv, f), s)| beta * mv + f - beta * s)
            .collect();
        diffs.push(fresh.iter().zip(&stale).map(|(f, s)| f - s).collect());
        new_v.push(vi);
        u.push(fresh);
    }

    state.prev_x = std::mem::replace(&mut state.x, new_x);
    state.v = new_v;
    state.t = t;
    Ok(StepInfo {
        t,
        eta,
        beta,
        u,
        w: Some(diffs),
        ifo_calls,
    })
}

/// One DSGD round: `x_{t+1} = W x_t - eta grad f_i(x_t; z_t)`, then a fresh
/// gradient is drawn at the new iterate.
pub fn dsgd_step(
    state: &mut SwarmState,
    w: &MixingMatrix,
    obj: &dyn StochasticObjective,
    eta: f64,
    rngs: &mut [NodeRng],
    sampling: Sampling,
) -> Result<StepInfo, AlgorithmError> {
    state.validate(w, obj, rngs)?;
    let new_x = consensus_descent(w, &state.x, &state.v, eta);
    let mut ifo_calls = 0;
    let u = rngs
        .iter_mut()
        .enumerate()
        .map(|(node, rng)| {
            let handles = draw_samples(obj, node, rng, sampling)?;
            ifo_calls += handles.len();
            batch_gradient(obj, node, &handles, &new_x[node])
        })
        .collect::<Result<Vec<_>, _>>()?;
    state.prev_x = std::mem::replace(&mut state.x, new_x);
    state.v = u.clone();
    state.t += 1;
    Ok(StepInfo {
        t: state.t,
        eta,
        beta: 0.0,
        u,
        w: None,
        ifo_calls,
    })
}

/// One GNSD round:
///
/// ```text
/// x_{t+1} = W x_t - eta y_t
/// y_{t+1} = W y_t + grad f_i(x_{t+1}; z_{t+1}) - grad f_i(x_t; z_t)
/// ```
///
/// The subtracted gradient is the one stored from the previous round.
pub fn gnsd_step(
    state: &mut SwarmState,
    w: &MixingMatrix,
    obj: &dyn StochasticObjective,
    eta: f64,
    rngs: &mut [NodeRng],
    sampling: Sampling,
) -> Result<StepInfo, AlgorithmError> {
    state.validate(w, obj, rngs)?;
    let tracker = state
        .y
        .as_ref()
        .ok_or_else(|| AlgorithmError::StateMismatch("GNSD state has no tracker".into()))?;
    let new_x = consensus_descent(w, &state.x, tracker, eta);
    let mut new_y = w.mix(tracker);
    let mut ifo_calls = 0;
    let u = rngs
        .iter_mut()
        .enumerate()
        .map(|(node, rng)| {
            let handles = draw_samples(obj, node, rng, sampling)?;
            ifo_calls += handles.len();
            batch_gradient(obj, node, &handles, &new_x[node])
        })
        .collect::<Result<Vec<_>, _>>()?;
    for ((yi, fresh), old) in new_y.iter_mut().zip(&u).zip(&state.v) {
        for ((a, f), o) in yi.iter_mut().zip(fresh).zip(old) {
            *a += f - o;
        }
    }
    state.prev_x = std::mem::replace(&mut state.x, new_x);
    state.v = u.clone();
    state.y = Some(new_y);
    state.t += 1;
    Ok(StepInfo {
        t: state.t,
        eta,
        beta: 0.0,
        u,
        w: None,
        ifo_calls,
    })
}

/// Dispatches one round of `kind`. Baselines take `eta_t` from `sched`.
pub fn step(
    kind: AlgorithmKind,
    state: &mut SwarmState,
    w: &MixingMatrix,
    obj: &dyn StochasticObjective,
    sched: &Schedule,
    rngs: &mut [NodeRng],
    sampling: Sampling,
) -> Result<StepInfo, AlgorithmError> {
    match kind {
        AlgorithmKind::GtStorm => gt_storm_step(state, w, obj, sched, rngs, sampling),
        AlgorithmKind::Dsgd | AlgorithmKind::Gnsd => {
            sched.check_horizon(state.t + 1)?;
            let eta = sched.eta(state.t);
            if kind == AlgorithmKind::Dsgd {
                dsgd_step(state, w, obj, eta, rngs, sampling)
            } else {
                gnsd_step(state, w, obj, eta, rngs, sampling)
            }
        }
    }
}
