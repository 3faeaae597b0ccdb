//! Experiment configuration, read from JSON.
//!
//! ```json
//! {
//!   "name": "satimage-rw",
//!   "env": { "kind": "dataset", "path": "data/satimage.libsvm", "fit_rows": 1000 },
//!   "behavior": { "kind": "random_walk", "w": 0.7 },
//!   "evaluation": { "kind": "classifier", "w": 0.7 },
//!   "t": 1000, "n": 1000, "replications": 20, "base_seed": 0,
//!   "estimators": ["DM", "AdaIPW", "A2IPW", "FA3IPW", "SFA3IPW", "FA2daIPW"]
//! }
//! ```
//!
//! Every other key has a default; see the field docs below.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ope_core::envs::SyntheticSpec;
use ope_core::estimators::{VarianceForm, DEFAULT_ALPHA, DEFAULT_EPSILON};
use ope_core::nuisance::{NuisanceMethod, DEFAULT_REFIT_EVERY};
use ope_core::policies::{LogisticConfig, RW_FLOOR, RW_STEP_SD};
use ope_core::Method;

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvConfig {
    Synthetic(SyntheticSpec),
    Dataset(DatasetConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// LIBSVM file; relative paths resolve against the config file.
    pub path: PathBuf,
    /// Standardize features to zero mean and unit variance.
    #[serde(default = "yes")]
    pub standardize: bool,
    /// Keep at most this many rows (uniform subsample, fixed by the base seed).
    #[serde(default)]
    pub subsample: Option<usize>,
    /// Rows reserved for fitting the evaluation classifier, disjoint from
    /// every logged and evaluation row.
    #[serde(default = "default_fit_rows")]
    pub fit_rows: usize,
    /// Draw contexts with replacement instead of shuffling rows.
    #[serde(default)]
    pub with_replacement: bool,
}

fn yes() -> bool {
    true
}

fn default_fit_rows() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BehaviorConfig {
    /// Random walk on the simplex mixed with uniform at weight `w`.
    RandomWalk {
        #[serde(default = "default_w")]
        w: f64,
        #[serde(default = "default_step")]
        step_sd: f64,
    },
    /// LinUCB mixed with uniform at weight `w`.
    Linucb {
        #[serde(default = "default_w")]
        w: f64,
        #[serde(default = "one")]
        alpha: f64,
        #[serde(default = "one")]
        lambda: f64,
    },
    Uniform,
}

impl BehaviorConfig {
    pub fn label(&self) -> &'static str {
        match self {
            BehaviorConfig::RandomWalk { .. } => "RW",
            BehaviorConfig::Linucb { .. } => "UCB",
            BehaviorConfig::Uniform => "uniform",
        }
    }
}

fn default_w() -> f64 {
    0.7
}

fn default_step() -> f64 {
    RW_STEP_SD
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvaluationConfig {
    Constant {
        probs: Vec<f64>,
    },
    /// `π^e(a|x) ∝ exp(w_a·x + b_a)`; each row is `[w_a…, b_a]`.
    Softmax {
        weights: Vec<Vec<f64>>,
    },
    /// Logistic classifier prediction mixed with uniform at weight `w`.
    /// Datasets only.
    Classifier {
        #[serde(default = "default_w")]
        w: f64,
        #[serde(default)]
        logistic: LogisticConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub env: EnvConfig,
    pub behavior: BehaviorConfig,
    pub evaluation: EvaluationConfig,
    /// Logged periods.
    pub t: usize,
    /// Evaluation covariates; 0 selects sample splitting.
    #[serde(default)]
    pub n: usize,
    /// Split fraction used when `n = 0`.
    #[serde(default = "default_r")]
    pub split_r: f64,
    /// Burn-in for SFA3IPW; default half the estimation window.
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Initial weight of the two-step first pass.
    #[serde(default = "one")]
    pub g_tilde: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub variance_form: VarianceForm,
    pub estimators: Vec<Method>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub nuisance: NuisanceMethod,
    #[serde(default = "default_refit")]
    pub refit_every: usize,
    /// Reward bound C₂ for the outcome model; defaults to the environment's.
    #[serde(default)]
    pub c2: Option<f64>,
    /// Fit the evaluation classifier on the logged rows of each replication
    /// instead of on a disjoint split.
    #[serde(default)]
    pub paper_faithful: bool,
    #[serde(default)]
    pub allow_failures: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_r() -> f64 {
    0.5
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_replications() -> usize {
    20
}

fn default_refit() -> usize {
    DEFAULT_REFIT_EVERY
}

/// Floor for the random-walk behavior policy.
pub const BEHAVIOR_FLOOR: f64 = RW_FLOOR;

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Reads a config file and resolves a relative dataset path against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let EnvConfig::Dataset(ds) = &mut cfg.env {
            if ds.path.is_relative() {
                if let Some(dir) = path.parent() {
                    let candidate = dir.join(&ds.path);
                    if candidate.exists() || !ds.path.exists() {
                        ds.path = candidate;
                    }
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.t == 0 {
            return bad("t must be at least 1".into());
        }
        if self.estimators.is_empty() {
            return bad("estimators list is empty".into());
        }
        if self.n == 0 && !(self.split_r > 0.0 && self.split_r < 1.0) {
            return bad(format!("split_r must lie in (0, 1), got {}", self.split_r));
        }
        if self.refit_every == 0 {
            return bad("refit_every must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        match &self.env {
            EnvConfig::Dataset(ds) => {
                if !ds.path.exists() {
                    return bad(format!("dataset file {} does not exist", ds.path.display()));
                }
            }
            EnvConfig::Synthetic(_) => {
                if matches!(self.evaluation, EvaluationConfig::Classifier { .. }) {
                    return bad("classifier evaluation policies need a dataset environment".into());
                }
            }
        }
        Ok(())
    }

    /// Log plus evaluation rows a replication draws.
    pub fn rows_needed(&self) -> usize {
        self.t + self.n
    }
}
