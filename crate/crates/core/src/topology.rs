//! Communication graphs and the consensus mixing matrix.
//!
//! Graphs are undirected, simple and connected. The mixing matrix follows the
//! Laplacian recipe `W = I - 2/(3 lambda_max(L)) L`, which is symmetric, doubly
//! stochastic and carries the sparsity pattern of the graph.

use std::collections::BTreeSet;
use std::fmt;
use std::io::BufRead;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum number of Erdős–Rényi redraws before giving up on connectivity.
pub const MAX_RESAMPLES: u64 = 1000;

/// Tolerance on row and column sums of a mixing matrix.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no connected graph with m={m}, pc={pc} after {attempts} draws")]
    ConnectivityFailure { m: usize, pc: f64, attempts: u64 },
    #[error("graph is disconnected")]
    Disconnected,
    #[error("symmetric eigensolver failed to converge")]
    SpectralFailure,
    #[error("mixing matrix invariant violated: {0}")]
    InvariantViolation(String),
    #[error("edge list line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Undirected simple graph over nodes `0..m`.
///
/// Edges are stored as `(u, v)` with `u < v`, sorted and unique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    m: usize,
    edges: Vec<(usize, usize)>,
    seed: u64,
}

impl Topology {
    /// Builds a topology from an explicit edge list and checks connectivity.
    pub fn from_edges(
        m: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, TopologyError> {
        if m == 0 {
            return Err(TopologyError::InvalidParameter("m must be positive".into()));
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= m || v >= m {
                return Err(TopologyError::InvalidParameter(format!(
                    "edge ({u},{v}) out of range for m={m}"
                )));
            }
            if u == v {
                return Err(TopologyError::InvalidParameter(format!("self-loop at node {u}")));
            }
            set.insert((u.min(v), u.max(v)));
        }
        let topo = Self {
            m,
            edges: set.into_iter().collect(),
            seed: 0,
        };
        if !topo.is_connected() {
            return Err(TopologyError::Disconnected);
        }
        Ok(topo)
    }

    pub fn complete(m: usize) -> Result<Self, TopologyError> {
        let edges = (0..m).flat_map(|u| (u + 1..m).map(move |v| (u, v)));
        Self::from_edges(m, edges)
    }

    pub fn path(m: usize) -> Result<Self, TopologyError> {
        Self::from_edges(m, (1..m).map(|v| (v - 1, v)))
    }

    pub fn star(m: usize) -> Result<Self, TopologyError> {
        Self::from_edges(m, (1..m).map(|v| (0, v)))
    }

    pub fn ring(m: usize) -> Result<Self, TopologyError> {
        if m < 3 {
            return Self::path(m);
        }
        Self::from_edges(m, (0..m).map(|v| (v, (v + 1) % m)))
    }

    pub fn node_count(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Seed that produced this graph (0 for hand-built graphs).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&(u.min(v), u.max(v))).is_ok()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.m];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Sum of all node degrees, i.e. twice the edge count.
    pub fn degree_sum(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn is_connected(&self) -> bool {
        is_connected(self.m, &self.edges)
    }

    /// Serializes to the edge-list text format: `m <count>` then one `u v` per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("m {}\n", self.m);
        for (u, v) in &self.edges {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }

    /// Parses the edge-list text format written by [`Topology::to_edge_list`].
    pub fn parse_edge_list<R: BufRead>(reader: R) -> Result<Self, TopologyError> {
        let mut m = None;
        let mut edges = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|e| TopologyError::Parse {
                    line: line_no,
                    msg: format!("bad integer {s:?}: {e}"),
                })
            };
            match (m, toks.as_slice()) {
                (None, ["m", count]) => m = Some(parse(count)?),
                (None, _) => {
                    return Err(TopologyError::Parse {
                        line: line_no,
                        msg: "expected header \"m <count>\"".into(),
                    })
                }
                (Some(_), [u, v]) => edges.push((parse(u)?, parse(v)?)),
                (Some(_), _) => {
                    return Err(TopologyError::Parse {
                        line: line_no,
                        msg: "expected \"u v\"".into(),
                    })
                }
            }
        }
        let m = m.ok_or(TopologyError::Parse {
            line: 0,
            msg: "missing header".into(),
        })?;
        Self::from_edges(m, edges)
    }
}

fn is_connected(m: usize, edges: &[(usize, usize)]) -> bool {
    if m == 0 {
        return false;
    }
    let mut adj = vec![Vec::new(); m];
    for &(u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut seen = vec![false; m];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == m
}

/// Draws a connected Erdős–Rényi graph G(m, pc).
///
/// Disconnected draws are discarded and redrawn with seeds `seed+1, seed+2, ...`
/// up to [`MAX_RESAMPLES`] attempts. The returned topology records the seed of
/// the accepted draw.
pub fn generate_erdos_renyi(m: usize, pc: f64, seed: u64) -> Result<Topology, TopologyError> {
    if m < 2 {
        return Err(TopologyError::InvalidParameter(format!("m must be >= 2, got {m}")));
    }
    if !(pc > 0.0 && pc <= 1.0) {
        return Err(TopologyError::InvalidParameter(format!(
            "pc must lie in (0, 1], got {pc}"
        )));
    }
    for attempt in 0..MAX_RESAMPLES {
        let draw_seed = seed.wrapping_add(attempt);
        let mut rng = ChaCha8Rng::seed_from_u64(draw_seed);
        let mut edges = Vec::new();
        for u in 0..m {
            for v in u + 1..m {
                if rng.gen::<f64>() < pc {
                    edges.push((u, v));
                }
            }
        }
        if is_connected(m, &edges) {
            return Ok(Topology {
                m,
                edges,
                seed: draw_seed,
            });
        }
    }
    Err(TopologyError::ConnectivityFailure {
        m,
        pc,
        attempts: MAX_RESAMPLES,
    })
}

/// Graph Laplacian `D - A`.
pub fn laplacian(t: &Topology) -> DMatrix<f64> {
    let m = t.node_count();
    let mut l = DMatrix::zeros(m, m);
    for &(u, v) in t.edges() {
        l[(u, v)] = -1.0;
        l[(v, u)] = -1.0;
        l[(u, u)] += 1.0;
        l[(v, v)] += 1.0;
    }
    l
}

/// Eigenvalues of a symmetric matrix, sorted in descending order.
pub fn symmetric_spectrum(a: &DMatrix<f64>) -> Result<Vec<f64>, TopologyError> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or(TopologyError::SpectralFailure)?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(TopologyError::SpectralFailure);
    }
    vals.sort_by(|a, b| b.total_cmp(a));
    Ok(vals)
}

/// `max{|lambda_2|, |lambda_m|}` of a symmetric matrix.
///
/// Returns 0 for a 1x1 matrix, whose spectrum has no second eigenvalue.
pub fn second_eigenvalue_magnitude(w: &DMatrix<f64>) -> Result<f64, TopologyError> {
    let spec = symmetric_spectrum(w)?;
    if spec.len() < 2 {
        return Ok(0.0);
    }
    Ok(spec[1].abs().max(spec[spec.len() - 1].abs()))
}

/// How a mixing matrix was built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixingRecipe {
    /// `I - 2/(3 lambda_max(L)) L`.
    Laplacian,
    /// Identity; nodes never communicate.
    Identity,
    /// `(1/m) 1 1^T`; exact averaging.
    Averaging,
    /// User-supplied dense matrix.
    Custom,
}

/// Symmetric doubly stochastic consensus matrix with cached spectral quantity.
///
/// The dense matrix is kept alongside per-row lists of nonzero entries, which
/// is what [`MixingMatrix::mix`] iterates. `W ⊗ I` is never formed.
#[derive(Debug, Clone)]
pub struct MixingMatrix {
    w: DMatrix<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    lambda: f64,
    source: MixingRecipe,
}

impl MixingMatrix {
    fn from_parts(w: DMatrix<f64>, source: MixingRecipe) -> Result<Self, TopologyError> {
        let m = w.nrows();
        if w.ncols() != m {
            return Err(TopologyError::InvariantViolation("matrix is not square".into()));
        }
        check_stochastic(&w)?;
        for i in 0..m {
            for j in 0..i {
                if w[(i, j)] != w[(j, i)] {
                    return Err(TopologyError::InvariantViolation(format!(
                        "asymmetric entry ({i},{j})"
                    )));
                }
            }
        }
        let lambda = second_eigenvalue_magnitude(&w)?;
        let rows = (0..m)
            .map(|i| {
                (0..m)
                    .filter(|&j| w[(i, j)] != 0.0)
                    .map(|j| (j, w[(i, j)]))
                    .collect()
            })
            .collect();
        Ok(Self {
            w,
            rows,
            lambda,
            source,
        })
    }

    /// Validates and wraps a dense symmetric doubly stochastic matrix.
    pub fn from_dense(w: DMatrix<f64>) -> Result<Self, TopologyError> {
        Self::from_parts(w, MixingRecipe::Custom)
    }

    pub fn identity(m: usize) -> Self {
        Self::from_parts(DMatrix::identity(m, m), MixingRecipe::Identity)
            .expect("identity is a valid mixing matrix")
    }

    pub fn averaging(m: usize) -> Self {
        let w = DMatrix::from_element(m, m, 1.0 / m as f64);
        // Row sums of (1/m) * m may differ from 1 by an ulp for some m.
        Self::from_parts(w, MixingRecipe::Averaging).expect("averaging is a valid mixing matrix")
    }

    pub fn node_count(&self) -> usize {
        self.w.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    /// Second-largest eigenvalue magnitude.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn source(&self) -> MixingRecipe {
        self.source
    }

    /// Nonzero entries `(j, W_ij)` of row `i`, in increasing `j`.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Computes `sum_j W_ij blocks[j]` for node `i` into `out`.
    pub fn mix_row_into(&self, i: usize, blocks: &[Vec<f64>], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(j, wij) in &self.rows[i] {
            for (o, b) in out.iter_mut().zip(&blocks[j]) {
                *o += wij * b;
            }
        }
    }

    /// Applies `W ⊗ I` to stacked blocks, reading only the input blocks.
    pub fn mix(&self, blocks: &[Vec<f64>]) -> Vec<Vec<f64>> {
        assert_eq!(blocks.len(), self.node_count(), "block count must equal m");
        let p = blocks.first().map_or(0, Vec::len);
        (0..blocks.len())
            .map(|i| {
                let mut out = vec![0.0; p];
                self.mix_row_into(i, blocks, &mut out);
                out
            })
            .collect()
    }

    /// Checks that `W_ij > 0` exactly on edges and the diagonal, zero elsewhere.
    pub fn check_sparsity(&self, t: &Topology) -> Result<(), TopologyError> {
        let m = self.node_count();
        if t.node_count() != m {
            return Err(TopologyError::InvariantViolation(format!(
                "topology has {} nodes, matrix has {m}",
                t.node_count()
            )));
        }
        for i in 0..m {
            for j in 0..m {
                let wij = self.w[(i, j)];
                let adjacent = i == j || t.has_edge(i, j);
                if adjacent && wij <= 0.0 {
                    return Err(TopologyError::InvariantViolation(format!(
                        "W[{i}][{j}] = {wij} must be positive"
                    )));
                }
                if !adjacent && wij != 0.0 {
                    return Err(TopologyError::InvariantViolation(format!(
                        "W[{i}][{j}] = {wij} must be zero for non-adjacent nodes"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for MixingMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} mixing matrix (m={}, lambda={:.6})", self.source, self.node_count(), self.lambda)
    }
}

fn check_stochastic(w: &DMatrix<f64>) -> Result<(), TopologyError> {
    let m = w.nrows();
    for i in 0..m {
        let row: f64 = (0..m).map(|j| w[(i, j)]).sum();
        let col: f64 = (0..m).map(|j| w[(j, i)]).sum();
        if (row - 1.0).abs() > STOCHASTIC_TOL || (col - 1.0).abs() > STOCHASTIC_TOL {
            return Err(TopologyError::InvariantViolation(format!(
                "row/column {i} sums to {row}/{col}"
            )));
        }
    }
    Ok(())
}

/// Builds `W = I - 2/(3 lambda_max(L)) L` and validates it against the graph.
pub fn build_mixing_matrix(t: &Topology) -> Result<MixingMatrix, TopologyError> {
    if !t.is_connected() {
        return Err(TopologyError::Disconnected);
    }
    let m = t.node_count();
    if m == 1 {
        return Ok(MixingMatrix::identity(1));
    }
    let l = laplacian(t);
    let lmax = symmetric_spectrum(&l)?[0];
    let scale = 2.0 / (3.0 * lmax);
    let mut w = DMatrix::zeros(m, m);
    for i in 0..m {
        w[(i, i)] = 1.0 - scale * l[(i, i)];
        for j in 0..i {
            let v = -scale * l[(i, j)];
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    let mixing = MixingMatrix::from_parts(w, MixingRecipe::Laplacian)?;
    mixing.check_sparsity(t)?;
    if mixing.lambda >= 1.0 {
        return Err(TopologyError::InvariantViolation(format!(
            "lambda = {} is not below 1",
            mixing.lambda
        )));
    }
    Ok(mixing)
}
