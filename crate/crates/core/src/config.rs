//! Run configuration: a strict JSON schema with defaults.
//!
//! ```json
//! {
//!   "topology":  { "m": 10, "pc": 0.5, "seed": 1 },
//!   "algorithm": { "name": "gt-storm",
//!                  "schedule": { "kind": "experiment", "eta0": 0.1 } },
//!   "objective": { "kind": "logistic", "alpha": 0.1,
//!                  "synthetic": { "samples_per_node": 200, "dim": 50 } },
//!   "run":       { "iterations": 2000, "trials": 10, "seed": 0 },
//!   "output":    { "csv": "out.csv", "summary": "summary.json" }
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::{AlgorithmKind, DecayExponent};
use crate::data::PartitionMode;

/// Error located by a JSON pointer into the config document.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("config error at {pointer}: {message}")]
pub struct ConfigError {
    pub pointer: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pc: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Edge-list file; replaces the random graph when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_list: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleConfig {
    /// `eta_t = eta0 (1 + 0.1 t)^(-exponent)`; exponent defaults to 1/3 for
    /// GT-STORM and 1/2 for the baselines, rho to `1/eta0^2`.
    Experiment {
        eta0: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        exponent: Option<DecayExponent>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<f64>,
    },
    /// `eta_t = tau/(omega+t)^(1/3)` with rho and the minimal omega derived
    /// from audited smoothness and the mixing matrix.
    Theory {
        tau: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        omega: Option<f64>,
        c0: f64,
        c1: f64,
        #[serde(default = "default_audit_probes")]
        audit_probes: usize,
        #[serde(default = "default_audit_radius")]
        audit_radius: f64,
    },
}

fn default_audit_probes() -> usize {
    20
}

fn default_audit_radius() -> f64 {
    1.0
}

fn default_batch() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub name: AlgorithmKind,
    pub schedule: ScheduleConfig,
    #[serde(default = "default_batch")]
    pub batch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    Logistic,
    Quadratic,
}

/// Generated data used when no dataset file is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub samples_per_node: usize,
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
    /// Quadratic only: every sample center is the origin.
    #[serde(default)]
    pub identical_centers: bool,
}

fn default_alpha() -> f64 {
    0.1
}

fn default_partition() -> PartitionMode {
    PartitionMode::Iid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub kind: ObjectiveKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
    /// Feature dimension override for LibSVM files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default = "default_partition")]
    pub partition: PartitionMode,
    #[serde(default)]
    pub holdout: f64,
    #[serde(default)]
    pub scale_features: bool,
}

fn default_trials() -> usize {
    1
}

fn default_stride() -> usize {
    1
}

fn default_c1() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunParams {
    pub iterations: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub check_mode: bool,
    /// Constant `c1 > 0` of the contraction inequalities asserted in check mode.
    #[serde(default = "default_c1")]
    pub check_c1: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Common starting point; zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Use the same sampling seed for every trial.
    #[serde(default)]
    pub same_seed_trials: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub topology: TopologyConfig,
    pub algorithm: AlgorithmConfig,
    pub objective: ObjectiveConfig,
    pub run: RunParams,
    #[serde(default)]
    pub output: OutputConfig,
}

fn positive(pointer: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(pointer, format!("must be positive, got {v}")))
    }
}

impl RunConfig {
    /// Semantic checks beyond the schema.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = &self.topology;
        match (&t.edge_list, t.m, t.pc) {
            (Some(_), None, None) => {}
            (Some(_), _, _) => {
                return Err(ConfigError::new("/topology", "give either edge_list or m and pc, not both"))
            }
            (None, Some(m), Some(pc)) => {
                if m < 2 {
                    return Err(ConfigError::new("/topology/m", "need at least 2 nodes"));
                }
                if !(pc > 0.0 && pc <= 1.0) {
                    return Err(ConfigError::new("/topology/pc", format!("must lie in (0, 1], got {pc}")));
                }
            }
            (None, None, _) => return Err(ConfigError::new("/topology/m", "missing")),
            (None, _, None) => return Err(ConfigError::new("/topology/pc", "missing")),
        }

        let a = &self.algorithm;
        if a.batch == 0 {
            return Err(ConfigError::new("/algorithm/batch", "must be >= 1"));
        }
        match a.schedule {
            ScheduleConfig::Experiment { eta0, rho, .. } => {
                positive("/algorithm/schedule/eta0", eta0)?;
                if let Some(rho) = rho {
                    positive("/algorithm/schedule/rho", rho)?;
                }
            }
            ScheduleConfig::Theory {
                tau,
                omega,
                c0,
                c1,
                audit_probes,
                audit_radius,
            } => {
                if a.name != AlgorithmKind::GtStorm {
                    return Err(ConfigError::new("/algorithm/schedule/kind", "theory schedule applies to gt-storm only"));
                }
                positive("/algorithm/schedule/tau", tau)?;
                positive("/algorithm/schedule/c0", c0)?;
                positive("/algorithm/schedule/c1", c1)?;
                positive("/algorithm/schedule/audit_radius", audit_radius)?;
                if let Some(omega) = omega {
                    positive("/algorithm/schedule/omega", omega)?;
                }
                if audit_probes == 0 {
                    return Err(ConfigError::new("/algorithm/schedule/audit_probes", "must be >= 1"));
                }
            }
        }

        let o = &self.objective;
        if o.alpha < 0.0 || !o.alpha.is_finite() {
            return Err(ConfigError::new("/objective/alpha", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&o.holdout) {
            return Err(ConfigError::new("/objective/holdout", "must lie in [0, 1)"));
        }
        match (&o.dataset, &o.synthetic) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::new("/objective", "give either dataset or synthetic, not both"))
            }
            (None, None) => return Err(ConfigError::new("/objective/synthetic", "missing; no dataset given")),
            (Some(_), None) if o.kind == ObjectiveKind::Quadratic => {
                return Err(ConfigError::new("/objective/dataset", "quadratic objectives are synthetic only"))
            }
            (None, Some(s)) => {
                if s.samples_per_node == 0 {
                    return Err(ConfigError::new("/objective/synthetic/samples_per_node", "must be >= 1"));
                }
                if s.dim == 0 {
                    return Err(ConfigError::new("/objective/synthetic/dim", "must be >= 1"));
                }
            }
            _ => {}
        }

        let r = &self.run;
        if r.iterations == 0 {
            return Err(ConfigError::new("/run/iterations", "must be >= 1"));
        }
        if r.trials == 0 {
            return Err(ConfigError::new("/run/trials", "must be >= 1"));
        }
        if r.stride == 0 {
            return Err(ConfigError::new("/run/stride", "must be >= 1"));
        }
        positive("/run/check_c1", r.check_c1)?;
        Ok(())
    }

    /// Node count, read from the edge list when one is configured.
    pub fn node_count_hint(&self) -> Option<usize> {
        self.topology.m
    }
}

fn pointer_from_path(path: &serde_path_to_error::Path, message: &str) -> String {
    let mut pointer = String::new();
    for seg in path.iter() {
        match seg {
            serde_path_to_error::Segment::Seq { index } => pointer.push_str(&format!("/{index}")),
            serde_path_to_error::Segment::Map { key } => pointer.push_str(&format!("/{key}")),
            serde_path_to_error::Segment::Enum { variant } => pointer.push_str(&format!("/{variant}")),
            serde_path_to_error::Segment::Unknown => {}
        }
    }
    // Tagged enums report unknown fields at the enclosing object.
    if let Some(rest) = message.strip_prefix("unknown field `") {
        if let Some(field) = rest.split('`').next() {
            if !pointer.ends_with(&format!("/{field}")) {
                pointer.push('/');
                pointer.push_str(field);
            }
        }
    }
    if pointer.is_empty() {
        pointer.push('/');
    }
    pointer
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let message = e.inner().to_string();
        ConfigError::new(pointer_from_path(e.path(), &message), message)
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new("/", format!("{}: {e}", path.display())))?;
    parse_config(&text)
}
