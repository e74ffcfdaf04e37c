//! Per-iteration measurements and the CSV row format.

use serde::Serialize;
use thiserror::Error;

use crate::algorithms::{AlgorithmKind, SwarmState};
use crate::data::Dataset;
use crate::objectives::{full_local_gradient, global_loss, ObjectiveError, StochasticObjective};
use crate::stacked::{consensus_sq, mean, norm_sq};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("holdout set is empty")]
    EmptyDataset,
    #[error("parameter dimension {got} is smaller than feature dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// Fixed CSV column order.
pub const CSV_HEADER: &str = "trial,t,eta,beta,global_loss,grad_norm_sq,consensus_err,stationarity,samples_used,comm_rounds,comm_scalars,test_acc,potential";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub trial: usize,
    pub t: usize,
    pub eta: f64,
    pub beta: f64,
    pub global_loss: f64,
    pub grad_norm_sq: f64,
    pub consensus_err: f64,
    pub stationarity: f64,
    pub samples_used: u64,
    pub comm_rounds: u64,
    pub comm_scalars: u64,
    pub test_acc: Option<f64>,
    pub potential: Option<f64>,
}

/// 17 significant digits, enough for an exact round trip of an `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

impl RunRecord {
    pub fn to_csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.trial,
            self.t,
            format_float(self.eta),
            format_float(self.beta),
            format_float(self.global_loss),
            format_float(self.grad_norm_sq),
            format_float(self.consensus_err),
            format_float(self.stationarity),
            self.samples_used,
            self.comm_rounds,
            self.comm_scalars,
            opt(self.test_acc),
            opt(self.potential),
        )
    }
}

/// Components of the stationarity measure at the current state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stationarity {
    /// `||(1/m) sum_i grad f_i(x̄)||^2`.
    pub grad_norm_sq: f64,
    /// `(1/m) sum_i ||x_i - x̄||^2`.
    pub consensus_err: f64,
    pub total: f64,
}

/// Gradient magnitude at the node average plus average consensus error.
/// Uses full local gradients.
pub fn stationarity_metric(state: &SwarmState, obj: &dyn StochasticObjective) -> Result<Stationarity, ObjectiveError> {
    let m = state.node_count();
    let x_bar = mean(&state.x);
    let grads: Vec<Vec<f64>> = (0..m).map(|i| full_local_gradient(obj, i, &x_bar)).collect::<Result<_, _>>()?;
    let grad_norm_sq = norm_sq(&mean(&grads));
    let consensus_err = consensus_sq(&state.x) / m as f64;
    Ok(Stationarity {
        grad_norm_sq,
        consensus_err,
        total: grad_norm_sq + consensus_err,
    })
}

pub fn node_average_loss(state: &SwarmState, obj: &dyn StochasticObjective) -> Result<f64, ObjectiveError> {
    global_loss(obj, &mean(&state.x))
}

/// Fraction of holdout samples classified correctly by `sigmoid(x^T z) >= 1/2`
/// (ties go to class 1).
pub fn accuracy(x: &[f64], holdout: &Dataset) -> Result<f64, MetricsError> {
    if holdout.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    if x.len() < holdout.d {
        return Err(MetricsError::DimensionMismatch {
            expected: holdout.d,
            got: x.len(),
        });
    }
    let correct = holdout
        .samples
        .iter()
        .filter(|s| u8::from(s.features.dot(x) >= 0.0) == s.label)
        .count();
    Ok(correct as f64 / holdout.len() as f64)
}

/// Accuracy evaluated at the node-averaged parameter.
pub fn state_accuracy(state: &SwarmState, holdout: &Dataset) -> Result<f64, MetricsError> {
    accuracy(&mean(&state.x), holdout)
}

/// Cumulative `(rounds, scalars)` after `t` rounds: every node sends its
/// per-round vectors to each neighbour.
pub fn communication_counters(kind: AlgorithmKind, degree_sum: usize, p: usize, t: usize) -> (u64, u64) {
    let t = t as u64;
    (t, t * degree_sum as u64 * (kind.vectors_per_round() * p) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Sample, SparseVector};
    use crate::objectives::QuadraticObjective;
    use crate::topology::Topology;

    fn state(x: Vec<Vec<f64>>) -> SwarmState {
        SwarmState {
            v: x.clone(),
            prev_x: x.clone(),
            x,
            y: None,
            t: 0,
        }
    }

    #[test]
    fn zero_at_common_stationary_point() {
        let obj = QuadraticObjective::new(vec![vec![vec![1.0, -1.0]]; 3]).unwrap();
        let s = stationarity_metric(&state(vec![vec![1.0, -1.0]; 3]), &obj).unwrap();
        assert_eq!((s.grad_norm_sq, s.consensus_err, s.total), (0.0, 0.0, 0.0));
    }

    #[test]
    fn two_node_scalar_hand_value() {
        let obj = QuadraticObjective::new(vec![vec![vec![0.0]], vec![vec![0.0]]]).unwrap();
        let s = stationarity_metric(&state(vec![vec![0.0], vec![2.0]]), &obj).unwrap();
        assert_eq!(s.grad_norm_sq, 1.0);
        assert_eq!(s.consensus_err, 1.0);
        assert_eq!(s.total, 2.0);
    }

    #[test]
    fn doubling_offsets_quadruples_consensus_error() {
        let obj = QuadraticObjective::new(vec![vec![vec![0.3]], vec![vec![-0.1]], vec![vec![0.9]]]).unwrap();
        let a = stationarity_metric(&state(vec![vec![1.0], vec![1.5], vec![0.5]]), &obj).unwrap();
        let b = stationarity_metric(&state(vec![vec![1.0], vec![2.0], vec![0.0]]), &obj).unwrap();
        assert!((b.consensus_err - 4.0 * a.consensus_err).abs() < 1e-15);
        assert!((b.grad_norm_sq - a.grad_norm_sq).abs() < 1e-15);
    }

    fn labelled(points: &[(f64, u8)]) -> Dataset {
        let samples = points
            .iter()
            .map(|&(z, label)| Sample {
                features: SparseVector::from_dense(&[z]),
                label,
            })
            .collect();
        Dataset::new("toy", 1, samples).unwrap()
    }

    #[test]
    fn accuracy_rules() {
        let balanced = labelled(&[(1.0, 1), (-1.0, 0), (2.0, 1), (-2.0, 0)]);
        assert_eq!(accuracy(&[0.0], &balanced).unwrap(), 0.5);
        assert_eq!(accuracy(&[10.0], &balanced).unwrap(), 1.0);

        let flipped = labelled(&[(1.0, 0), (-1.0, 1), (2.0, 0), (-2.0, 1)]);
        let a = accuracy(&[0.3], &labelled(&[(1.0, 1), (-1.0, 1), (2.0, 0), (-0.5, 0)])).unwrap();
        let b = accuracy(&[0.3], &labelled(&[(1.0, 0), (-1.0, 0), (2.0, 1), (-0.5, 1)])).unwrap();
        assert_eq!(a + b, 1.0);
        assert_eq!(accuracy(&[10.0], &flipped).unwrap(), 0.0);

        let empty = Dataset::new("e", 1, vec![]).unwrap();
        assert!(matches!(accuracy(&[0.0], &empty), Err(MetricsError::EmptyDataset)));
    }

    #[test]
    fn communication_examples() {
        let k3 = Topology::complete(3).unwrap();
        assert_eq!(communication_counters(AlgorithmKind::Dsgd, k3.degree_sum(), 4, 1), (1, 24));
        assert_eq!(communication_counters(AlgorithmKind::GtStorm, k3.degree_sum(), 4, 1), (1, 48));
        assert_eq!(communication_counters(AlgorithmKind::Gnsd, k3.degree_sum(), 4, 0), (0, 0));
    }

    #[test]
    fn csv_row_layout() {
        let r = RunRecord {
            trial: 1,
            t: 5,
            eta: 0.1,
            beta: 0.0,
            global_loss: 0.5,
            grad_norm_sq: 0.25,
            consensus_err: 0.0,
            stationarity: 0.25,
            samples_used: 30,
            comm_rounds: 5,
            comm_scalars: 120,
            test_acc: None,
            potential: Some(1.5),
        };
        let row = r.to_csv_row();
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), CSV_HEADER.split(',').count());
        assert_eq!(cols[2].parse::<f64>().unwrap(), 0.1);
        assert_eq!(cols[11], "");
        assert_eq!(cols[12].parse::<f64>().unwrap(), 1.5);
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 6.02e23, -1e-300, 123456.789] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
    }
}
