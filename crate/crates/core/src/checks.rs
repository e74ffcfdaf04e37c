//! Pathwise invariants asserted every iteration in check mode, and the exact
//! enumeration check of the estimator-error recursion.

use serde::Serialize;
use thiserror::Error;

use crate::algorithms::{AlgorithmKind, StepInfo, SwarmState};
use crate::objectives::{full_local_gradient, ObjectiveError, StochasticObjective};
use crate::stacked::{consensus_sq, dist_sq, max_abs, max_abs_diff, mean, norm_sq, stacked_dist_sq, stacked_norm_sq};
use crate::topology::MixingMatrix;

/// Tolerance for the averaged-iterate identities, relative to the magnitude
/// of the compared vectors (floored at 1).
pub const IDENTITY_TOL: f64 = 1e-12;

/// Relative slack on the contraction inequalities.
pub const INEQUALITY_REL_TOL: f64 = 1e-9;

/// Absolute floor on inequality slack, scaled by the squared state magnitude.
/// Covers roundoff when both sides vanish, e.g. mixing identical blocks.
pub const INEQUALITY_ABS_FLOOR: f64 = 1e-24;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("iteration {t}: {name} violated (lhs={lhs:e}, rhs={rhs:e})")]
pub struct InvariantViolation {
    pub t: usize,
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
}

/// Tally of assertions made by an [`InvariantChecker`].
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CheckCounts {
    pub mean_identities: usize,
    pub contraction_inequalities: usize,
}

impl CheckCounts {
    pub fn total(&self) -> usize {
        self.mean_identities + self.contraction_inequalities
    }

    pub fn merge(&mut self, other: &CheckCounts) {
        self.mean_identities += other.mean_identities;
        self.contraction_inequalities += other.contraction_inequalities;
    }
}

/// Checks one round against the averaged-iterate identities and the
/// contraction inequalities, for any `c1 > 0`.
#[derive(Debug, Clone)]
pub struct InvariantChecker {
    pub c1: f64,
    pub lambda: f64,
    pub counts: CheckCounts,
}

impl InvariantChecker {
    pub fn new(w: &MixingMatrix, c1: f64) -> Self {
        Self {
            c1,
            lambda: w.lambda(),
            counts: CheckCounts::default(),
        }
    }

    fn identity(&mut self, t: usize, name: &'static str, lhs: &[f64], rhs: &[f64]) -> Result<(), InvariantViolation> {
        self.counts.mean_identities += 1;
        let gap = max_abs_diff(lhs, rhs);
        let scale = max_abs(lhs).max(max_abs(rhs)).max(1.0);
        if gap <= IDENTITY_TOL * scale {
            Ok(())
        } else {
            Err(InvariantViolation {
                t,
                name,
                lhs: gap,
                rhs: IDENTITY_TOL * scale,
            })
        }
    }

    fn inequality(&mut self, t: usize, name: &'static str, lhs: f64, rhs: f64, scale: f64) -> Result<(), InvariantViolation> {
        self.counts.contraction_inequalities += 1;
        if lhs <= rhs * (1.0 + INEQUALITY_REL_TOL) + INEQUALITY_ABS_FLOOR * scale.max(1.0) {
            Ok(())
        } else {
            Err(InvariantViolation { t, name, lhs, rhs })
        }
    }

    /// Checks the round `before -> after` described by `info`.
    pub fn check_step(
        &mut self,
        kind: AlgorithmKind,
        before: &SwarmState,
        info: &StepInfo,
        after: &SwarmState,
    ) -> Result<(), InvariantViolation> {
        let t = info.t;
        let eta = info.eta;
        let m = before.node_count() as f64;
        let dir = before.direction();

        // x̄_t = x̄_{t-1} - eta v̄_{t-1}
        let dir_bar = mean(dir);
        let predicted: Vec<f64> = mean(&before.x)
            .iter()
            .zip(&dir_bar)
            .map(|(x, d)| x - eta * d)
            .collect();
        self.identity(t, "parameter mean update", &mean(&after.x), &predicted)?;

        match kind {
            AlgorithmKind::GtStorm => {
                // v̄_t = beta v̄_{t-1} + beta w̄_t + (1 - beta) ū_t
                let beta = info.beta;
                let w_bar = mean(info.w.as_deref().unwrap_or_default());
                let u_bar = mean(&info.u);
                let predicted: Vec<f64> = dir_bar
                    .iter()
                    .zip(&w_bar)
                    .zip(&u_bar)
                    .map(|((v, w), u)| beta * v + beta * w + (1.0 - beta) * u)
                    .collect();
                self.identity(t, "estimator mean update", &mean(&after.v), &predicted)?;
            }
            AlgorithmKind::Gnsd => {
                let tracker = after.y.as_deref().unwrap_or_default();
                self.identity(t, "gradient tracking", &mean(tracker), &mean(&info.u))?;
            }
            AlgorithmKind::Dsgd => {}
        }

        let x_cons = consensus_sq(&before.x);
        let d_cons = consensus_sq(dir);
        let scale = stacked_norm_sq(&before.x) + stacked_norm_sq(&after.x) + eta * eta * stacked_norm_sq(dir);

        let lhs = consensus_sq(&after.x);
        let rhs = (1.0 + self.c1) * self.lambda * self.lambda * x_cons + (1.0 + 1.0 / self.c1) * eta * eta * d_cons;
        self.inequality(t, "parameter consensus contraction", lhs, rhs, scale)?;

        let lhs = stacked_dist_sq(&after.x, &before.x);
        let rhs = 8.0 * x_cons + 4.0 * eta * eta * d_cons + 4.0 * eta * eta * m * norm_sq(&dir_bar);
        self.inequality(t, "iterate movement bound", lhs, rhs, scale)?;

        if kind == AlgorithmKind::GtStorm {
            let beta = info.beta;
            let w_norm = info.w.as_deref().map_or(0.0, stacked_norm_sq);
            let lhs = consensus_sq(&after.v);
            let rhs = (1.0 + self.c1) * beta * beta * self.lambda * self.lambda * d_cons
                + 2.0 * (1.0 + 1.0 / self.c1) * (beta * beta * w_norm + (1.0 - beta).powi(2) * stacked_norm_sq(&info.u));
            let scale = stacked_norm_sq(&after.v) + stacked_norm_sq(dir);
            self.inequality(t, "estimator consensus contraction", lhs, rhs, scale)?;
        }
        Ok(())
    }
}

/// Both sides of the one-step estimator-error bound at a frozen state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorErrorCheck {
    /// `E ||v̄_t - ḡ_t||^2` over all joint single-sample draws.
    pub expected_error: f64,
    /// `beta^2 ||v̄_{t-1} - ḡ_{t-1}||^2 + 2 beta^2 L^2/m ||x_t - x_{t-1}||^2 + 2 (1-beta)^2 sigma^2 / m`.
    pub bound: f64,
    /// Number of joint draws enumerated.
    pub outcomes: usize,
}

impl EstimatorErrorCheck {
    pub fn holds(&self) -> bool {
        self.expected_error <= self.bound
    }
}

/// Upper limit on the number of joint draws [`estimator_error_check`] enumerates.
pub const MAX_OUTCOMES: usize = 1 << 22;

/// Freezes `(x_{t-1}, v_{t-1})`, applies the deterministic parameter update,
/// and enumerates every joint single-sample draw `(z_1, ..., z_m)` to compute
/// the exact conditional expectation of the estimator error after the
/// GT-STORM estimator update.
#[allow(clippy::too_many_arguments)]
pub fn estimator_error_check(
    obj: &dyn StochasticObjective,
    w: &MixingMatrix,
    x_prev: &[Vec<f64>],
    v_prev: &[Vec<f64>],
    eta: f64,
    beta: f64,
    l_hat: f64,
    sigma_hat: f64,
) -> Result<EstimatorErrorCheck, ObjectiveError> {
    let m = x_prev.len();
    let p = obj.dim();
    let mut x_t = w.mix(x_prev);
    for (xi, vi) in x_t.iter_mut().zip(v_prev) {
        xi.iter_mut().zip(vi).for_each(|(a, b)| *a -= eta * b);
    }

    let g_prev: Vec<Vec<f64>> = (0..m).map(|i| full_local_gradient(obj, i, &x_prev[i])).collect::<Result<_, _>>()?;
    let g_t: Vec<Vec<f64>> = (0..m).map(|i| full_local_gradient(obj, i, &x_t[i])).collect::<Result<_, _>>()?;
    let g_prev_bar = mean(&g_prev);
    let g_t_bar = mean(&g_t);
    let v_prev_bar = mean(v_prev);

    // v̄_t = beta * v̄_{t-1} + (1/m) sum_i [u_i(z_i) - beta * grad f_i(x_{i,t-1}; z_i)]
    let contributions: Vec<Vec<Vec<f64>>> = (0..m)
        .map(|i| {
            (0..obj.local_len(i))
                .map(|s| {
                    let mut fresh = vec![0.0; p];
                    let mut stale = vec![0.0; p];
                    obj.accumulate_sample_grad(i, s, &x_t[i], &mut fresh);
                    obj.accumulate_sample_grad(i, s, &x_prev[i], &mut stale);
                    fresh.iter().zip(&stale).map(|(f, st)| (f - beta * st) / m as f64).collect()
                })
                .collect()
        })
        .collect();

    let sizes: Vec<usize> = contributions.iter().map(Vec::len).collect();
    let outcomes = sizes.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n)).filter(|&n| n <= MAX_OUTCOMES).ok_or_else(|| {
        ObjectiveError::InvalidParameter(format!("joint sample space {sizes:?} too large to enumerate"))
    })?;

    let base: Vec<f64> = v_prev_bar.iter().zip(&g_t_bar).map(|(v, g)| beta * v - g).collect();
    let mut choice = vec![0usize; m];
    let mut total = 0.0;
    for _ in 0..outcomes {
        let mut err = base.clone();
        for (i, &s) in choice.iter().enumerate() {
            err.iter_mut().zip(&contributions[i][s]).for_each(|(e, c)| *e += c);
        }
        total += norm_sq(&err);
        for (i, c) in choice.iter_mut().enumerate() {
            *c += 1;
            if *c < sizes[i] {
                break;
            }
            *c = 0;
        }
    }
    let expected_error = total / outcomes as f64;

    let mf = m as f64;
    let movement: f64 = x_t.iter().zip(x_prev).map(|(a, b)| dist_sq(a, b)).sum();
    let bound = beta * beta * dist_sq(&v_prev_bar, &g_prev_bar)
        + 2.0 * beta * beta * l_hat * l_hat / mf * movement
        + 2.0 * (1.0 - beta).powi(2) * sigma_hat * sigma_hat / mf;
    Ok(EstimatorErrorCheck {
        expected_error,
        bound,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::synthetic_quadratic;
    use crate::topology::{build_mixing_matrix, Topology};

    /// Independent route: with independent node draws,
    /// `E||a + sum_i Z_i||^2 = ||a + sum_i E Z_i||^2 + sum_i Var(Z_i)`.
    fn variance_decomposition(
        obj: &dyn StochasticObjective,
        w: &MixingMatrix,
        x_prev: &[Vec<f64>],
        v_prev: &[Vec<f64>],
        eta: f64,
        beta: f64,
    ) -> f64 {
        let m = x_prev.len();
        let p = obj.dim();
        let x_t: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                (0..p)
                    .map(|k| (0..m).map(|j| w.get(i, j) * x_prev[j][k]).sum::<f64>() - eta * v_prev[i][k])
                    .collect()
            })
            .collect();
        let mut centre: Vec<f64> = (0..p)
            .map(|k| {
                let vbar = v_prev.iter().map(|v| v[k]).sum::<f64>() / m as f64;
                let gbar = (0..m)
                    .map(|i| full_local_gradient(obj, i, &x_t[i]).unwrap()[k])
                    .sum::<f64>()
                    / m as f64;
                beta * vbar - gbar
            })
            .collect();
        let mut variance = 0.0;
        for i in 0..m {
            let n = obj.local_len(i);
            let z: Vec<Vec<f64>> = (0..n)
                .map(|s| {
                    let f = crate::objectives::sample_gradient(obj, i, s, &x_t[i]).unwrap();
                    let st = crate::objectives::sample_gradient(obj, i, s, &x_prev[i]).unwrap();
                    (0..p).map(|k| (f[k] - beta * st[k]) / m as f64).collect()
                })
                .collect();
            let ez: Vec<f64> = (0..p).map(|k| z.iter().map(|zs| zs[k]).sum::<f64>() / n as f64).collect();
            centre.iter_mut().zip(&ez).for_each(|(c, e)| *c += e);
            variance += z.iter().map(|zs| dist_sq(zs, &ez)).sum::<f64>() / n as f64;
        }
        norm_sq(&centre) + variance
    }

    #[test]
    fn enumeration_matches_variance_decomposition() {
        let obj = synthetic_quadratic(3, 2, 4, 5).unwrap();
        let w = build_mixing_matrix(&Topology::complete(3).unwrap()).unwrap();
        let x_prev = vec![vec![0.3, -1.0], vec![1.2, 0.4], vec![-0.5, 0.9]];
        let v_prev = vec![vec![0.1, 0.2], vec![-0.4, 0.0], vec![0.7, -0.3]];
        for beta in [0.0, 0.35, 1.0] {
            let got = estimator_error_check(&obj, &w, &x_prev, &v_prev, 0.2, beta, 1.0, 1.0).unwrap();
            assert_eq!(got.outcomes, 64);
            let want = variance_decomposition(&obj, &w, &x_prev, &v_prev, 0.2, beta);
            assert!((got.expected_error - want).abs() < 1e-12 * want.max(1.0), "{} vs {want}", got.expected_error);
        }
    }

    #[test]
    fn oversized_sample_space_is_rejected() {
        let obj = synthetic_quadratic(8, 1, 20, 0).unwrap();
        let w = MixingMatrix::identity(8);
        let blocks = vec![vec![0.0]; 8];
        assert!(estimator_error_check(&obj, &w, &blocks, &blocks, 0.1, 0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn violation_is_reported_with_name() {
        let mut checker = InvariantChecker {
            c1: 1.0,
            lambda: 0.5,
            counts: CheckCounts::default(),
        };
        let err = checker.inequality(3, "demo", 2.0, 1.0, 1.0).unwrap_err();
        assert_eq!(err.t, 3);
        assert_eq!(err.name, "demo");
        assert_eq!(checker.counts.contraction_inequalities, 1);
    }
}
