//! Step-size admissibility constants for the `t^(-1/3)` schedule and the
//! Lyapunov potential used for diagnostics.

use serde::Serialize;
use thiserror::Error;

use crate::algorithms::SwarmState;
use crate::objectives::{full_local_gradient, global_loss, ObjectiveError, StochasticObjective};
use crate::stacked::{consensus_sq, dist_sq, mean};

/// Multiplier applied to an audited smoothness estimate before it is used here.
pub const SMOOTHNESS_SAFETY: f64 = 1.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("hypothesis 1 - (1+c1) lambda^2 - 1/c0 = {value} is not positive; increase c0 or decrease c1")]
    HypothesisViolation { value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// Constants of the convergence guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryParams {
    pub l: f64,
    pub lambda: f64,
    pub c0: f64,
    pub c1: f64,
    pub tau: f64,
    pub omega: f64,
    pub rho: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    /// Smallest `omega` satisfying `omega >= max{2, tau^3 / min{k}^3}`.
    pub min_omega: f64,
}

impl TheoryParams {
    /// `1 - (1+c1) lambda^2 - 1/c0`, the convergence hypothesis.
    pub fn hypothesis(&self) -> f64 {
        1.0 - (1.0 + self.c1) * self.lambda * self.lambda - 1.0 / self.c0
    }

    /// `1 - (1+c1) lambda^2 - 3/(4 c0)`, the variant required inside the proof.
    pub fn hypothesis_proof_variant(&self) -> f64 {
        1.0 - (1.0 + self.c1) * self.lambda * self.lambda - 3.0 / (4.0 * self.c0)
    }

    /// `k2` with the `1/(2 c0)` denominator term the proof derives.
    pub fn k2_proof_variant(&self) -> f64 {
        (1.0 - (1.0 + self.c1) * self.lambda * self.lambda) / (1.0 + 1.0 / self.c1 + 1.0 / (2.0 * self.c0))
    }

    pub fn k_min(&self) -> f64 {
        self.k1.min(self.k2).min(self.k3)
    }

    /// `eta_0 = tau / omega^(1/3)`.
    pub fn eta0(&self) -> f64 {
        self.tau / self.omega.cbrt()
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }
}

/// Computes `k1, k2, k3`, `rho` and the minimal admissible `omega`; `omega` is
/// set to that minimum.
pub fn derive_constants(l: f64, lambda: f64, c0: f64, c1: f64, tau: f64) -> Result<TheoryParams, TheoryError> {
    for (name, v) in [("L", l), ("c0", c0), ("c1", c1), ("tau", tau)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(TheoryError::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    if !(0.0..1.0).contains(&lambda) {
        return Err(TheoryError::InvalidParameter(format!("lambda must lie in [0, 1), got {lambda}")));
    }
    let gap = 1.0 - (1.0 + c1) * lambda * lambda;
    let hypothesis = gap - 1.0 / c0;
    if hypothesis <= 0.0 {
        return Err(TheoryError::HypothesisViolation { value: hypothesis });
    }
    let k1 = 1.0 / (2.0 * l + 32.0 * (1.0 + 1.0 / c1) * c0 * l * l);
    let k2 = gap / (1.0 + 1.0 / c1 + 1.0 / c0);
    let tau3 = tau * tau * tau;
    let k3 = (hypothesis / (2.0 / (3.0 * tau3) + (2.0 * l * l + 1.0) / (2.0 * c0))).sqrt();
    let rho = 2.0 / (3.0 * tau3) + 32.0 * l * l;
    let k_min = k1.min(k2).min(k3);
    let min_omega = (tau3 / (k_min * k_min * k_min)).max(2.0);
    Ok(TheoryParams {
        l,
        lambda,
        c0,
        c1,
        tau,
        omega: min_omega,
        rho,
        k1,
        k2,
        k3,
        min_omega,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintCheck {
    pub name: &'static str,
    pub passed: bool,
    pub lhs: f64,
    pub rhs: f64,
}

/// Pass/fail report for a parameter choice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleReport {
    pub passed: bool,
    /// Which of `k1`, `k2`, `k3` is smallest.
    pub binding_constraint: &'static str,
    pub eta0: f64,
    pub k_min: f64,
    pub hypothesis: f64,
    pub hypothesis_proof_variant: f64,
    pub k2_proof_variant: f64,
    pub constraints: Vec<ConstraintCheck>,
}

impl ScheduleReport {
    pub fn failures(&self) -> impl Iterator<Item = &ConstraintCheck> {
        self.constraints.iter().filter(|c| !c.passed)
    }
}

/// Relative slack on `eta_0 <= min k` so that `omega = min_omega` passes after
/// the cube-root round trip.
const ETA_SLACK: f64 = 1e-12;

pub fn validate_schedule(p: &TheoryParams) -> ScheduleReport {
    let k_min = p.k_min();
    let binding_constraint = if k_min == p.k1 {
        "k1"
    } else if k_min == p.k2 {
        "k2"
    } else {
        "k3"
    };
    let eta0 = p.eta0();
    let hypothesis = p.hypothesis();
    let rho_expected = 2.0 / (3.0 * p.tau.powi(3)) + 32.0 * p.l * p.l;
    let constraints = vec![
        ConstraintCheck {
            name: "1 - (1+c1) lambda^2 - 1/c0 > 0",
            passed: hypothesis > 0.0,
            lhs: hypothesis,
            rhs: 0.0,
        },
        ConstraintCheck {
            name: "omega >= 2",
            passed: p.omega >= 2.0,
            lhs: p.omega,
            rhs: 2.0,
        },
        ConstraintCheck {
            name: "omega >= tau^3 / min{k1,k2,k3}^3",
            passed: p.omega >= p.min_omega * (1.0 - ETA_SLACK),
            lhs: p.omega,
            rhs: p.tau.powi(3) / k_min.powi(3),
        },
        ConstraintCheck {
            name: "eta0 <= min{k1,k2,k3}",
            passed: eta0 <= k_min * (1.0 + ETA_SLACK),
            lhs: eta0,
            rhs: k_min,
        },
        ConstraintCheck {
            name: "rho == 2/(3 tau^3) + 32 L^2",
            passed: (p.rho - rho_expected).abs() <= 1e-12 * rho_expected,
            lhs: p.rho,
            rhs: rho_expected,
        },
    ];
    ScheduleReport {
        passed: constraints.iter().all(|c| c.passed),
        binding_constraint,
        eta0,
        k_min,
        hypothesis,
        hypothesis_proof_variant: p.hypothesis_proof_variant(),
        k2_proof_variant: p.k2_proof_variant(),
        constraints,
    }
}

/// Potential
///
/// ```text
/// H_t = f(x̄_t) + ||ḡ_t - v̄_t||^2 / (32 L^2 eta_{t-1})
///     + c0 / (m eta_{t-1}) ||x_t - 1 ⊗ x̄_t||^2 + c0 / m ||v_t - 1 ⊗ v̄_t||^2
/// ```
///
/// where `ḡ_t` averages full local gradients at each node's own iterate.
pub fn potential(
    state: &SwarmState,
    obj: &dyn StochasticObjective,
    eta_prev: f64,
    c0: f64,
    l: f64,
) -> Result<f64, TheoryError> {
    if !(eta_prev > 0.0) || !(l > 0.0) {
        return Err(TheoryError::InvalidParameter("eta_prev and L must be positive".into()));
    }
    let m = state.node_count() as f64;
    let x_bar = mean(&state.x);
    let grads: Vec<Vec<f64>> = state
        .x
        .iter()
        .enumerate()
        .map(|(i, xi)| full_local_gradient(obj, i, xi))
        .collect::<Result<_, _>>()?;
    let g_bar = mean(&grads);
    let v_bar = mean(&state.v);
    Ok(global_loss(obj, &x_bar)?
        + dist_sq(&g_bar, &v_bar) / (32.0 * l * l * eta_prev)
        + c0 / (m * eta_prev) * consensus_sq(&state.x)
        + c0 / m * consensus_sq(&state.v))
}
