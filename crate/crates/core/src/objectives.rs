//! Stochastic first-order oracles.
//!
//! Every node `i` holds a finite sample collection; its local objective is the
//! uniform average `f_i(x) = (1/n_i) sum_s f_i(x; s)` and the global objective is
//! `f(x) = (1/m) sum_i f_i(x)`. Samples are addressed by handle (their index in
//! the node's collection) so a drawn sample can be re-evaluated at another
//! iterate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::data::{Dataset, Partition, Sample};

/// Lower clamp applied to probabilities before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-300;

/// Per-node random stream.
pub type NodeRng = ChaCha8Rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("node {0} has an empty dataset")]
    EmptyDataset(usize),
    #[error("node {node} out of range for {nodes} nodes")]
    NodeOutOfRange { node: usize, nodes: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Finite-sum objective distributed over nodes.
///
/// Implementations only provide per-sample evaluation; the free functions in
/// this module build full, batch and global quantities on top.
pub trait StochasticObjective: Send + Sync {
    fn dim(&self) -> usize;
    fn node_count(&self) -> usize;
    fn local_len(&self, node: usize) -> usize;
    fn sample_loss(&self, node: usize, sample: usize, x: &[f64]) -> f64;
    /// Adds the gradient of sample `sample` at `x` into `out`.
    fn accumulate_sample_grad(&self, node: usize, sample: usize, x: &[f64], out: &mut [f64]);
}

/// How a node draws the samples for one stochastic gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// `batch` handles uniformly with replacement.
    Random { batch: usize },
    /// Every sample of the node, in order; gives the full local gradient.
    EnumerateAll,
}

impl Sampling {
    pub fn single() -> Self {
        Sampling::Random { batch: 1 }
    }
}

/// One independent stream per node, derived from `(seed, node)`.
///
/// Node `i`'s stream does not depend on how many nodes exist.
pub fn node_streams(seed: u64, m: usize) -> Vec<NodeRng> {
    (0..m)
        .map(|node| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(node as u64);
            rng
        })
        .collect()
}

fn check_node(obj: &dyn StochasticObjective, node: usize) -> Result<(), ObjectiveError> {
    let nodes = obj.node_count();
    if node >= nodes {
        return Err(ObjectiveError::NodeOutOfRange { node, nodes });
    }
    if obj.local_len(node) == 0 {
        return Err(ObjectiveError::EmptyDataset(node));
    }
    Ok(())
}

fn check_dim(obj: &dyn StochasticObjective, x: &[f64]) -> Result<(), ObjectiveError> {
    if x.len() != obj.dim() {
        return Err(ObjectiveError::DimensionMismatch {
            expected: obj.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

pub fn sample_gradient(
    obj: &dyn StochasticObjective,
    node: usize,
    sample: usize,
    x: &[f64],
) -> Result<Vec<f64>, ObjectiveError> {
    check_node(obj, node)?;
    check_dim(obj, x)?;
    let mut g = vec![0.0; x.len()];
    obj.accumulate_sample_grad(node, sample, x, &mut g);
    Ok(g)
}

/// Average gradient over the given sample handles (duplicates count twice).
pub fn batch_gradient(
    obj: &dyn StochasticObjective,
    node: usize,
    handles: &[usize],
    x: &[f64],
) -> Result<Vec<f64>, ObjectiveError> {
    check_node(obj, node)?;
    check_dim(obj, x)?;
    let mut g = vec![0.0; x.len()];
    for &s in handles {
        obj.accumulate_sample_grad(node, s, x, &mut g);
    }
    let n = handles.len() as f64;
    if handles.len() > 1 {
        g.iter_mut().for_each(|gi| *gi /= n);
    }
    Ok(g)
}

pub fn full_local_gradient(
    obj: &dyn StochasticObjective,
    node: usize,
    x: &[f64],
) -> Result<Vec<f64>, ObjectiveError> {
    check_node(obj, node)?;
    let all: Vec<usize> = (0..obj.local_len(node)).collect();
    batch_gradient(obj, node, &all, x)
}

pub fn local_loss(obj: &dyn StochasticObjective, node: usize, x: &[f64]) -> Result<f64, ObjectiveError> {
    check_node(obj, node)?;
    check_dim(obj, x)?;
    let n = obj.local_len(node);
    Ok((0..n).map(|s| obj.sample_loss(node, s, x)).sum::<f64>() / n as f64)
}

/// `f(x) = (1/m) sum_i f_i(x)`.
pub fn global_loss(obj: &dyn StochasticObjective, x: &[f64]) -> Result<f64, ObjectiveError> {
    let m = obj.node_count();
    let mut total = 0.0;
    for node in 0..m {
        total += local_loss(obj, node, x)?;
    }
    Ok(total / m as f64)
}

/// `(1/m) sum_i grad f_i(x)`.
pub fn global_gradient(obj: &dyn StochasticObjective, x: &[f64]) -> Result<Vec<f64>, ObjectiveError> {
    let m = obj.node_count();
    let mut g = vec![0.0; x.len()];
    for node in 0..m {
        let gi = full_local_gradient(obj, node, x)?;
        g.iter_mut().zip(&gi).for_each(|(a, b)| *a += b);
    }
    g.iter_mut().for_each(|a| *a /= m as f64);
    Ok(g)
}

/// Draws sample handles for one stochastic gradient at `node`.
pub fn draw_samples(
    obj: &dyn StochasticObjective,
    node: usize,
    rng: &mut NodeRng,
    sampling: Sampling,
) -> Result<Vec<usize>, ObjectiveError> {
    check_node(obj, node)?;
    let n = obj.local_len(node);
    match sampling {
        Sampling::Random { batch: 0 } => Err(ObjectiveError::InvalidParameter("batch must be >= 1".into())),
        Sampling::Random { batch } => Ok((0..batch).map(|_| rng.gen_range(0..n)).collect()),
        Sampling::EnumerateAll => Ok((0..n).collect()),
    }
}

/// Draws samples and returns the averaged gradient together with the handles,
/// so the same samples can be evaluated again at a different iterate.
pub fn sample_stochastic_gradient(
    obj: &dyn StochasticObjective,
    node: usize,
    x: &[f64],
    rng: &mut NodeRng,
    sampling: Sampling,
) -> Result<(Vec<f64>, Vec<usize>), ObjectiveError> {
    let handles = draw_samples(obj, node, rng, sampling)?;
    let g = batch_gradient(obj, node, &handles, x)?;
    Ok((g, handles))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `alpha * sum_k x_k^2 / (1 + x_k^2)`.
pub fn regularizer(x: &[f64], alpha: f64) -> f64 {
    alpha * x.iter().map(|&v| v * v / (1.0 + v * v)).sum::<f64>()
}

fn regularizer_grad_component(v: f64, alpha: f64) -> f64 {
    let q = 1.0 + v * v;
    alpha * 2.0 * v / (q * q)
}

/// Cross-entropy of one sample plus the non-convex regularizer.
pub fn logistic_loss(x: &[f64], s: &Sample, alpha: f64) -> Result<f64, ObjectiveError> {
    if s.features.span() > x.len() {
        return Err(ObjectiveError::DimensionMismatch {
            expected: s.features.span(),
            got: x.len(),
        });
    }
    Ok(logistic_loss_unchecked(x, s, alpha))
}

fn logistic_loss_unchecked(x: &[f64], s: &Sample, alpha: f64) -> f64 {
    let z = s.features.dot(x);
    let p1 = sigmoid(z).max(LOG_FLOOR);
    let p0 = sigmoid(-z).max(LOG_FLOOR);
    let ce = if s.label == 1 { -p1.ln() } else { -p0.ln() };
    ce + regularizer(x, alpha)
}

/// Gradient of [`logistic_loss`]: `(sigmoid(x^T z) - y) z + alpha [2x_k/(1+x_k^2)^2]_k`.
pub fn logistic_grad(x: &[f64], s: &Sample, alpha: f64) -> Result<Vec<f64>, ObjectiveError> {
    if s.features.span() > x.len() {
        return Err(ObjectiveError::DimensionMismatch {
            expected: s.features.span(),
            got: x.len(),
        });
    }
    let mut g = vec![0.0; x.len()];
    accumulate_logistic_grad(x, s, alpha, &mut g);
    Ok(g)
}

fn accumulate_logistic_grad(x: &[f64], s: &Sample, alpha: f64, out: &mut [f64]) {
    let residual = sigmoid(s.features.dot(x)) - f64::from(s.label);
    for (i, v) in s.features.iter() {
        out[i] += residual * v;
    }
    if alpha != 0.0 {
        for (o, &xk) in out.iter_mut().zip(x) {
            *o += regularizer_grad_component(xk, alpha);
        }
    }
}

/// Binary logistic regression with the `x^2/(1+x^2)` regularizer.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    dim: usize,
    alpha: f64,
    nodes: Vec<Vec<Sample>>,
}

impl LogisticObjective {
    pub fn new(dim: usize, alpha: f64, nodes: Vec<Vec<Sample>>) -> Result<Self, ObjectiveError> {
        if alpha < 0.0 || !alpha.is_finite() {
            return Err(ObjectiveError::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
        }
        for (node, samples) in nodes.iter().enumerate() {
            if samples.is_empty() {
                return Err(ObjectiveError::EmptyDataset(node));
            }
            if let Some(s) = samples.iter().find(|s| s.features.span() > dim) {
                return Err(ObjectiveError::DimensionMismatch {
                    expected: dim,
                    got: s.features.span(),
                });
            }
        }
        Ok(Self { dim, alpha, nodes })
    }

    pub fn from_partition(ds: &Dataset, partition: &Partition, alpha: f64) -> Result<Self, ObjectiveError> {
        let nodes = partition.assignment.iter().map(|idx| ds.subset(idx)).collect();
        Self::new(ds.d, alpha, nodes)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn samples(&self, node: usize) -> &[Sample] {
        &self.nodes[node]
    }

    /// `max_s ||zeta_s||^2 / 4 + 2 alpha`, an upper bound on per-sample curvature.
    pub fn curvature_bound(&self) -> f64 {
        let max_norm = self
            .nodes
            .iter()
            .flatten()
            .map(|s| s.features.norm_sq())
            .fold(0.0, f64::max);
        max_norm / 4.0 + 2.0 * self.alpha
    }
}

impl StochasticObjective for LogisticObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn local_len(&self, node: usize) -> usize {
        self.nodes[node].len()
    }

    fn sample_loss(&self, node: usize, sample: usize, x: &[f64]) -> f64 {
        logistic_loss_unchecked(x, &self.nodes[node][sample], self.alpha)
    }

    fn accumulate_sample_grad(&self, node: usize, sample: usize, x: &[f64], out: &mut [f64]) {
        accumulate_logistic_grad(x, &self.nodes[node][sample], self.alpha, out);
    }
}

/// Per-sample loss `||x - c_s||^2 / 2` with node-specific centers.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    dim: usize,
    centers: Vec<Vec<Vec<f64>>>,
}

impl QuadraticObjective {
    /// `centers[node][sample]` is a point in R^dim.
    pub fn new(centers: Vec<Vec<Vec<f64>>>) -> Result<Self, ObjectiveError> {
        let dim = centers
            .iter()
            .flatten()
            .next()
            .map(Vec::len)
            .ok_or_else(|| ObjectiveError::InvalidParameter("no centers".into()))?;
        for (node, c) in centers.iter().enumerate() {
            if c.is_empty() {
                return Err(ObjectiveError::EmptyDataset(node));
            }
            if let Some(bad) = c.iter().find(|v| v.len() != dim) {
                return Err(ObjectiveError::DimensionMismatch {
                    expected: dim,
                    got: bad.len(),
                });
            }
        }
        Ok(Self { dim, centers })
    }

    pub fn centers(&self, node: usize) -> &[Vec<f64>] {
        &self.centers[node]
    }

    /// Global minimizer: mean over nodes of each node's mean center.
    pub fn optimum(&self) -> Vec<f64> {
        let m = self.centers.len() as f64;
        let mut opt = vec![0.0; self.dim];
        for node in &self.centers {
            let n = node.len() as f64;
            for c in node {
                opt.iter_mut().zip(c).for_each(|(o, ci)| *o += ci / n);
            }
        }
        opt.iter_mut().for_each(|o| *o /= m);
        opt
    }
}

impl StochasticObjective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn node_count(&self) -> usize {
        self.centers.len()
    }

    fn local_len(&self, node: usize) -> usize {
        self.centers[node].len()
    }

    fn sample_loss(&self, node: usize, sample: usize, x: &[f64]) -> f64 {
        let c = &self.centers[node][sample];
        0.5 * x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    }

    fn accumulate_sample_grad(&self, node: usize, sample: usize, x: &[f64], out: &mut [f64]) {
        let c = &self.centers[node][sample];
        for ((o, a), b) in out.iter_mut().zip(x).zip(c) {
            *o += a - b;
        }
    }
}

/// Random quadratic instance: node means from `N(0, I)`, sample centers from
/// `N(node mean, I)`.
pub fn synthetic_quadratic(m: usize, p: usize, n_per_node: usize, seed: u64) -> Result<QuadraticObjective, ObjectiveError> {
    if m == 0 || p == 0 || n_per_node == 0 {
        return Err(ObjectiveError::InvalidParameter(
            "m, p and samples per node must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = (0..m)
        .map(|_| {
            let mean: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
            (0..n_per_node)
                .map(|_| {
                    mean.iter()
                        .map(|mu| mu + rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect()
        })
        .collect();
    QuadraticObjective::new(centers)
}

/// Empirical lower bounds on the smoothness, variance and gradient constants.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct AuditedConstants {
    pub l_hat: f64,
    pub sigma_hat: f64,
    pub g_hat: f64,
}

/// Probes random parameter pairs in the box `[-radius, radius]^p` and reports
///
/// * `L = max sqrt(mean_s ||g_s(x) - g_s(y)||^2) / ||x - y||`,
/// * `sigma^2 = max mean_s ||g_s(x) - grad f_i(x)||^2`,
/// * `G^2 = max mean_s ||g_s(x)||^2`,
///
/// maximized over probes and nodes, with exact averages over each node's samples.
pub fn audit_constants(
    obj: &dyn StochasticObjective,
    probes: usize,
    radius: f64,
    seed: u64,
) -> Result<AuditedConstants, ObjectiveError> {
    if probes == 0 {
        return Err(ObjectiveError::InvalidParameter("probes must be >= 1".into()));
    }
    let p = obj.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut point = || -> Vec<f64> { (0..p).map(|_| rng.gen_range(-radius..=radius)).collect() };
    let (mut l2, mut s2, mut g2) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..probes {
        let x = point();
        let y = point();
        let dist2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        for node in 0..obj.node_count() {
            check_node(obj, node)?;
            let n = obj.local_len(node);
            let gx: Vec<Vec<f64>> = (0..n).map(|s| sample_gradient(obj, node, s, &x)).collect::<Result<_, _>>()?;
            let gy: Vec<Vec<f64>> = (0..n).map(|s| sample_gradient(obj, node, s, &y)).collect::<Result<_, _>>()?;
            if dist2 > 0.0 {
                let diff = mean_over(&gx, |s, k| gx[s][k] - gy[s][k]);
                l2 = l2.max(diff / dist2);
            }
            for g in [&gx, &gy] {
                let mean: Vec<f64> = (0..p).map(|k| g.iter().map(|gs| gs[k]).sum::<f64>() / n as f64).collect();
                s2 = s2.max(mean_over(g, |s, k| g[s][k] - mean[k]));
                g2 = g2.max(mean_over(g, |s, k| g[s][k]));
            }
        }
    }
    Ok(AuditedConstants {
        l_hat: l2.sqrt(),
        sigma_hat: s2.sqrt(),
        g_hat: g2.sqrt(),
    })
}

/// `mean_s sum_k f(s, k)^2` over the rows of `rows`.
fn mean_over(rows: &[Vec<f64>], f: impl Fn(usize, usize) -> f64) -> f64 {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    let total: f64 = (0..n)
        .map(|s| (0..p).map(|k| f(s, k).powi(2)).sum::<f64>())
        .sum();
    total / n as f64
}
