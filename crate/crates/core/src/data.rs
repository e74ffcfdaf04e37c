//! LibSVM ingestion and node partitioning.
//!
//! Lines look like `label idx:val idx:val ...` with 1-based, strictly increasing
//! feature indices. Labels `-1`/`0` map to class 0 and `+1`/`1` to class 1.
//!
//! ```text
//! +1 3:0.5 7:1.25
//! -1 1:2
//! ```

use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("node {0} received no samples")]
    EmptyNode(usize),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Sparse feature vector with strictly increasing 0-based indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Builds a sparse vector; indices must be strictly increasing.
    pub fn new(indices: Vec<u32>, values: Vec<f64>) -> Option<Self> {
        if indices.len() != values.len() || indices.windows(2).any(|w| w[0] >= w[1]) {
            return None;
        }
        Some(Self { indices, values })
    }

    /// Keeps every entry of a dense vector, including zeros.
    pub fn from_dense(dense: &[f64]) -> Self {
        Self {
            indices: (0..dense.len() as u32).collect(),
            values: dense.to_vec(),
        }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    /// Largest index plus one, or 0 when empty.
    pub fn span(&self) -> usize {
        self.indices.last().map_or(0, |&i| i as usize + 1)
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// One labelled example; label is 0 or 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: SparseVector,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub d: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, d: usize, samples: Vec<Sample>) -> Result<Self, DataError> {
        if let Some(bad) = samples.iter().position(|s| s.features.span() > d) {
            return Err(DataError::InvalidParameter(format!(
                "sample {bad} has a feature index beyond d={d}"
            )));
        }
        if let Some(bad) = samples.iter().position(|s| s.label > 1) {
            return Err(DataError::InvalidParameter(format!("sample {bad} has a non-binary label")));
        }
        Ok(Self {
            name: name.into(),
            d,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Divides every feature by its maximum absolute value over the dataset.
    pub fn scale_max_abs(&mut self) {
        let mut max_abs = vec![0.0f64; self.d];
        for s in &self.samples {
            for (i, v) in s.features.iter() {
                max_abs[i] = max_abs[i].max(v.abs());
            }
        }
        for s in &mut self.samples {
            for (k, &i) in s.features.indices.iter().enumerate() {
                let scale = max_abs[i as usize];
                if scale > 0.0 {
                    s.features.values[k] /= scale;
                }
            }
        }
    }

    /// Splits off a random holdout fraction; `frac = 0` keeps everything for training.
    pub fn split_holdout(&self, frac: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
        if !(0.0..1.0).contains(&frac) {
            return Err(DataError::InvalidParameter(format!(
                "holdout fraction must lie in [0, 1), got {frac}"
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = (frac * self.len() as f64).round() as usize;
        let pick = |idx: &[usize], suffix: &str| Dataset {
            name: format!("{}{suffix}", self.name),
            d: self.d,
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
        };
        let (test, train) = order.split_at(n_test);
        Ok((pick(train, ""), pick(test, "-holdout")))
    }

    /// Samples of one node under a partition.
    pub fn subset(&self, indices: &[usize]) -> Vec<Sample> {
        indices.iter().map(|&i| self.samples[i].clone()).collect()
    }
}

fn parse_label(tok: &str, line: usize) -> Result<u8, DataError> {
    let value: f64 = tok.parse().map_err(|_| DataError::Parse {
        line,
        msg: format!("unparseable label {tok:?}"),
    })?;
    if value == 1.0 {
        Ok(1)
    } else if value == 0.0 || value == -1.0 {
        Ok(0)
    } else {
        Err(DataError::Parse {
            line,
            msg: format!("label {tok:?} is not one of 0, 1, -1, +1"),
        })
    }
}

fn parse_line(text: &str, line: usize) -> Result<Sample, DataError> {
    let mut toks = text.split_whitespace();
    let label = parse_label(toks.next().unwrap_or_default(), line)?;
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for tok in toks {
        if tok.starts_with('#') {
            break;
        }
        let (idx, val) = tok.split_once(':').ok_or_else(|| DataError::Parse {
            line,
            msg: format!("feature token {tok:?} lacks ':'"),
        })?;
        let idx: u32 = idx.parse().map_err(|_| DataError::Parse {
            line,
            msg: format!("bad feature index in {tok:?}"),
        })?;
        if idx == 0 {
            return Err(DataError::Parse {
                line,
                msg: "feature indices are 1-based".into(),
            });
        }
        let val: f64 = val.parse().map_err(|_| DataError::Parse {
            line,
            msg: format!("bad feature value in {tok:?}"),
        })?;
        if !val.is_finite() {
            return Err(DataError::Parse {
                line,
                msg: format!("non-finite feature value in {tok:?}"),
            });
        }
        let idx = idx - 1;
        if indices.last().is_some_and(|&prev| prev >= idx) {
            return Err(DataError::Parse {
                line,
                msg: format!("feature index {} is not strictly increasing", idx + 1),
            });
        }
        indices.push(idx);
        values.push(val);
    }
    Ok(Sample {
        features: SparseVector { indices, values },
        label,
    })
}

/// Parses LibSVM text. `d` defaults to the largest index seen; `dim` overrides it.
pub fn parse_libsvm<R: BufRead>(reader: R, name: &str, dim: Option<usize>) -> Result<Dataset, DataError> {
    let mut samples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DataError::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        samples.push(parse_line(trimmed, line_no)?);
    }
    let observed = samples.iter().map(|s| s.features.span()).max().unwrap_or(0);
    let d = match dim {
        Some(d) if d < observed => {
            return Err(DataError::InvalidParameter(format!(
                "dimension override {d} is below the largest index {observed}"
            )))
        }
        Some(d) => d,
        None => observed,
    };
    Ok(Dataset {
        name: name.to_string(),
        d,
        samples,
    })
}

pub fn load_libsvm(path: &Path, dim: Option<usize>) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    parse_libsvm(std::io::BufReader::new(file), &name, dim)
}

/// Writes LibSVM text; floats use the shortest representation that round-trips.
pub fn to_libsvm(ds: &Dataset) -> String {
    let mut out = String::new();
    for s in &ds.samples {
        out.push_str(if s.label == 1 { "+1" } else { "-1" });
        for (i, v) in s.features.iter() {
            let _ = write!(out, " {}:{:?}", i + 1, v);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionMode {
    Iid,
    NonIid,
}

/// Assignment of sample indices to nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub assignment: Vec<Vec<usize>>,
    pub mode: PartitionMode,
}

impl Partition {
    pub fn node_count(&self) -> usize {
        self.assignment.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.assignment.iter().map(Vec::len).collect()
    }
}

/// Shuffles with `seed` and deals samples round-robin to `m` nodes.
pub fn partition_iid(ds: &Dataset, m: usize, seed: u64) -> Result<Partition, DataError> {
    if m == 0 || m > ds.len() {
        return Err(DataError::InvalidParameter(format!(
            "cannot split {} samples over {m} nodes",
            ds.len()
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![Vec::with_capacity(ds.len() / m + 1); m];
    for (k, idx) in order.into_iter().enumerate() {
        assignment[k % m].push(idx);
    }
    Ok(Partition {
        assignment,
        mode: PartitionMode::Iid,
    })
}

/// Node `i` receives every sample whose class id is congruent to `i` mod `m`.
pub fn partition_by_label<F>(ds: &Dataset, m: usize, label_of: F) -> Result<Partition, DataError>
where
    F: Fn(&Sample) -> usize,
{
    if m == 0 {
        return Err(DataError::InvalidParameter("m must be positive".into()));
    }
    let mut assignment = vec![Vec::new(); m];
    for (idx, s) in ds.samples.iter().enumerate() {
        assignment[label_of(s) % m].push(idx);
    }
    if let Some(empty) = assignment.iter().position(Vec::is_empty) {
        return Err(DataError::EmptyNode(empty));
    }
    Ok(Partition {
        assignment,
        mode: PartitionMode::NonIid,
    })
}

/// Scale of the leading feature coordinate in [`synthetic_binary`].
pub const SYNTHETIC_FEATURE_SCALE: f64 = 10.0;
/// Standard deviation of the hidden direction in [`synthetic_binary`].
pub const SYNTHETIC_TRUTH_SCALE: f64 = 0.2;

/// Synthetic binary classification data with dense Gaussian features.
///
/// Coordinate `k` (0-based) is `N(0, s_k^2)` with `s_k = 10/(k+1)`, a
/// power-law spectrum like that of real tabular data: the leading directions
/// are strongly curved while the per-sample smoothness stays within a small
/// factor of the top curvature. Labels are Bernoulli with probability
/// `sigmoid(x*^T zeta)` for a hidden `x* ~ N(0, 0.04 I)`.
pub fn synthetic_binary(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<f64> = (0..d)
        .map(|_| SYNTHETIC_TRUTH_SCALE * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let scales: Vec<f64> = (0..d).map(|k| SYNTHETIC_FEATURE_SCALE / (k + 1) as f64).collect();
    let samples = (0..n)
        .map(|_| {
            let dense: Vec<f64> = scales
                .iter()
                .map(|s| s * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let margin: f64 = dense.iter().zip(&truth).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (-margin).exp());
            let label = u8::from(rng.gen::<f64>() < p);
            Sample {
                features: SparseVector::from_dense(&dense),
                label,
            }
        })
        .collect();
    Dataset {
        name: format!("synthetic-d{d}-n{n}"),
        d,
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset, DataError> {
        parse_libsvm(text.as_bytes(), "t", None)
    }

    #[test]
    fn parses_positive_line() {
        let ds = parse("1 3:0.5 7:1.25").unwrap();
        let s = &ds.samples[0];
        assert_eq!(s.label, 1);
        assert_eq!(s.features.indices(), &[2, 6]);
        assert_eq!(s.features.values(), &[0.5, 1.25]);
        assert_eq!(ds.d, 7);
    }

    #[test]
    fn minus_one_maps_to_zero() {
        let ds = parse("-1 1:2").unwrap();
        assert_eq!(ds.samples[0].label, 0);
        assert_eq!(ds.samples[0].features.values(), &[2.0]);
    }

    #[test]
    fn repeated_index_is_rejected_with_line_number() {
        let err = parse("+1 2:1 2:1").unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn bad_tokens_report_their_line() {
        for text in ["1 1:1\n2 1:1", "1 1:1\n0 1x1", "1 1:1\n1 a:1", "1 1:1\n1 1:zz", "1 1:1\n1 0:1"] {
            let err = parse(text).unwrap_err();
            assert!(matches!(err, DataError::Parse { line: 2, .. }), "{text:?} -> {err}");
        }
    }

    #[test]
    fn skips_blank_and_comment_lines() {
        let ds = parse("# header\n\n1 1:1\n   \n0 2:3 # trailing\n").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.d, 2);
    }

    #[test]
    fn dimension_override() {
        let ds = parse_libsvm("1 3:1".as_bytes(), "t", Some(123)).unwrap();
        assert_eq!(ds.d, 123);
        assert!(parse_libsvm("1 3:1".as_bytes(), "t", Some(2)).is_err());
    }

    #[test]
    fn iid_partition_sizes() {
        let ds = synthetic_binary(10, 3, 0);
        let p = partition_iid(&ds, 10, 1).unwrap();
        assert!(p.sizes().iter().all(|&s| s == 1));

        let ds = synthetic_binary(7, 3, 0);
        let mut sizes = partition_iid(&ds, 3, 1).unwrap().sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 3]);

        assert_eq!(partition_iid(&ds, 3, 5).unwrap(), partition_iid(&ds, 3, 5).unwrap());
        assert!(partition_iid(&ds, 8, 0).is_err());
    }

    #[test]
    fn label_partition() {
        let ds = synthetic_binary(50, 4, 2);
        let p = partition_by_label(&ds, 2, |s| s.label as usize).unwrap();
        assert!(p.assignment[0].iter().all(|&i| ds.samples[i].label == 0));
        assert!(p.assignment[1].iter().all(|&i| ds.samples[i].label == 1));
        assert!(matches!(
            partition_by_label(&ds, 4, |s| s.label as usize),
            Err(DataError::EmptyNode(2))
        ));
    }

    #[test]
    fn ten_classes_give_pure_nodes() {
        let samples = (0..100)
            .map(|k| Sample {
                features: SparseVector::from_dense(&[k as f64]),
                label: 0,
            })
            .collect();
        let ds = Dataset::new("classes", 1, samples).unwrap();
        let class = |s: &Sample| s.features.values()[0] as usize % 10;
        let p = partition_by_label(&ds, 10, class).unwrap();
        for (node, idx) in p.assignment.iter().enumerate() {
            assert_eq!(idx.len(), 10);
            assert!(idx.iter().all(|&i| class(&ds.samples[i]) == node));
        }
    }

    #[test]
    fn max_abs_scaling() {
        let mut ds = parse("1 1:2 2:-4\n0 1:-1 2:1").unwrap();
        ds.scale_max_abs();
        assert_eq!(ds.samples[0].features.values(), &[1.0, -1.0]);
        assert_eq!(ds.samples[1].features.values(), &[-0.5, 0.25]);
    }

    #[test]
    fn holdout_split_covers_everything() {
        let ds = synthetic_binary(40, 2, 9);
        let (train, test) = ds.split_holdout(0.25, 3).unwrap();
        assert_eq!(train.len(), 30);
        assert_eq!(test.len(), 10);
        let (all, none) = ds.split_holdout(0.0, 3).unwrap();
        assert_eq!(all.len(), 40);
        assert!(none.is_empty());
    }
}
