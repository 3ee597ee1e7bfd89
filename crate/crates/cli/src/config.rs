//! Experiment configuration files.

use std::fmt;
use std::path::{Path, PathBuf};

use dppbo_core::{
    Algorithm, FunctionId, KernelParams, ObjectiveSpec, PriorMean, RecommendationRule,
    SamplerConfig, SamplerKind,
};
use serde::{Deserialize, Serialize};

/// Environment variable that replaces `base_seed`.
pub const SEED_ENV: &str = "DPPBO_SEED";

/// Every key accepted in a config file, for `--help`.
pub const CONFIG_KEYS: &str = "\
Config keys (JSON object):
  objective.function      branin | cosines | hartmann6 (required)
  objective.resolution    lattice points per dimension (50 for 2-d, 4 for hartmann6)
  objective.extra_points  seeded Latin-hypercube points added to the lattice (2000 for hartmann6)
  objective.grid_seed     seed of the extra points (0)
  objective.noise_std     observation noise deviation (10% of the grid range)
  objective.max_grid_size cap on the number of grid points (1000000)
  strategies              list of bucb, b-est, ucb-dpp-max, est-dpp-max, ucb-dpp-sample,
                          est-dpp-sample (all six)
  batch_sizes             list of batch sizes B (5, 10)
  iterations              outer iterations T (30)
  seeds                   replicates per (strategy, B) (50)
  base_seed               root of every random stream (0; DPPBO_SEED overrides)
  delta                   confidence parameter in (0, 1) (0.1)
  noise_variance          GP noise variance (noise_std squared)
  kernel.signal_variance  SE-ARD signal variance (per-function default)
  kernel.lengthscales     SE-ARD lengthscales, one per dimension (per-function default)
  prior_mean              \"first-observation\" or {\"constant\": c} (first-observation)
  recommendation          posterior-mean | best-observed (posterior-mean)
  regret_multiplier       BUCB confidence inflation C' >= 1 (1)
  init_budget             uncertainty-sampling warm-up size (0)
  sampler.kind            auto | exact | mcmc (auto)
  sampler.exact_threshold largest candidate set sampled exactly under auto (200)
  sampler.mcmc_steps      swap-chain length (10 m k ln m)
  entropies               record k-DPP entropies when enumerable (true)
  output_dir              result directory (results)
  plots                   write SVG charts (false)
  log_scale               log-scale chart y axis (true)
  workers                 parallel cells (available cores)
";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub objective: ObjectiveSpec,
    #[serde(default = "all_strategies")]
    pub strategies: Vec<Algorithm>,
    #[serde(default = "default_batch_sizes")]
    pub batch_sizes: Vec<usize>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub noise_variance: Option<f64>,
    #[serde(default)]
    pub kernel: Option<KernelConfig>,
    #[serde(default)]
    pub prior_mean: PriorMean,
    #[serde(default)]
    pub recommendation: RecommendationRule,
    #[serde(default = "one")]
    pub regret_multiplier: f64,
    #[serde(default)]
    pub init_budget: usize,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default = "yes")]
    pub entropies: bool,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub plots: bool,
    #[serde(default = "yes")]
    pub log_scale: bool,
    #[serde(default)]
    pub workers: Option<usize>,
}

/// Kernel hyper-parameters as written in a config file; validated later so
/// that problems are reported with their key path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
}

fn all_strategies() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}

fn default_batch_sizes() -> Vec<usize> {
    vec![5, 10]
}

fn default_iterations() -> usize {
    30
}

fn default_seeds() -> usize {
    50
}

fn default_delta() -> f64 {
    0.1
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

/// Default SE-ARD hyper-parameters for each benchmark.
pub fn default_kernel(function: FunctionId) -> KernelConfig {
    match function {
        FunctionId::Branin => KernelConfig {
            signal_variance: 2500.0,
            lengthscales: vec![4.0, 4.0],
        },
        FunctionId::Cosines => KernelConfig {
            signal_variance: 0.25,
            lengthscales: vec![0.15, 0.15],
        },
        FunctionId::Hartmann6 => KernelConfig {
            signal_variance: 0.5,
            lengthscales: vec![0.3; 6],
        },
    }
}

/// A config problem located by its key path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid config:\n{}", format_issues(.0))]
    Invalid(Vec<ConfigIssue>),
    #[error("{SEED_ENV} is not an unsigned integer: {0:?}")]
    Seed(String),
}

fn format_issues(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl ExperimentConfig {
    /// Minimal config for `function` with every other key at its default.
    pub fn new(function: FunctionId) -> Self {
        serde_json::from_value(serde_json::json!({ "objective": { "function": function } }))
            .expect("defaults deserialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Reads and validates a config file, then applies `DPPBO_SEED`.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.apply_env()?;
        cfg.validate().map_err(ConfigError::Invalid)?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.base_seed = raw.trim().parse().map_err(|_| ConfigError::Seed(raw))?;
        }
        Ok(())
    }

    pub fn kernel_config(&self) -> KernelConfig {
        self.kernel
            .clone()
            .unwrap_or_else(|| default_kernel(self.objective.function))
    }

    /// Kernel parameters; only valid after [`validate`](Self::validate).
    pub fn kernel_params(&self) -> KernelParams {
        let k = self.kernel_config();
        KernelParams::new(k.signal_variance, k.lengthscales).expect("validated kernel")
    }

    /// GP noise variance, defaulting to the objective's noise variance.
    pub fn gp_noise_variance(&self, objective_noise_std: f64) -> f64 {
        self.noise_variance
            .unwrap_or(objective_noise_std * objective_noise_std)
    }

    pub fn worker_count(&self) -> usize {
        self.workers.unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
    }

    /// Every problem in the config, each with its key path.
    pub fn validate(&self) -> Result<(), Vec<ConfigIssue>> {
        let mut issues = Vec::new();
        let mut bad = |path: &str, message: String| {
            issues.push(ConfigIssue {
                path: path.to_string(),
                message,
            })
        };
        let dim = self.objective.function.dim();
        if self.objective.resolution() < 2 {
            bad("objective.resolution", "must be at least 2".into());
        }
        if let Some(s) = self.objective.noise_std {
            if !s.is_finite() || s < 0.0 {
                bad("objective.noise_std", format!("must be non-negative, got {s}"));
            }
        }
        if self.strategies.is_empty() {
            bad("strategies", "must name at least one strategy".into());
        }
        if self.batch_sizes.is_empty() {
            bad("batch_sizes", "must list at least one batch size".into());
        }
        for (i, &b) in self.batch_sizes.iter().enumerate() {
            if b == 0 {
                bad(&format!("batch_sizes[{i}]"), "must be at least 1".into());
            }
        }
        if self.iterations == 0 {
            bad("iterations", "must be at least 1".into());
        }
        if self.seeds == 0 {
            bad("seeds", "must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            bad("delta", format!("must lie in (0, 1), got {}", self.delta));
        }
        if let Some(v) = self.noise_variance {
            if !v.is_finite() || v <= 0.0 {
                bad("noise_variance", format!("must be positive, got {v}"));
            }
        } else if self.objective.noise_std == Some(0.0) {
            bad(
                "noise_variance",
                "must be given explicitly when objective.noise_std is 0".into(),
            );
        }
        let k = self.kernel_config();
        if !k.signal_variance.is_finite() || k.signal_variance <= 0.0 {
            bad(
                "kernel.signal_variance",
                format!("must be positive, got {}", k.signal_variance),
            );
        }
        if k.lengthscales.len() != dim {
            bad(
                "kernel.lengthscales",
                format!("expected {dim} entries, got {}", k.lengthscales.len()),
            );
        }
        for (i, l) in k.lengthscales.iter().enumerate() {
            if !l.is_finite() || *l <= 0.0 {
                bad(&format!("kernel.lengthscales[{i}]"), format!("must be positive, got {l}"));
            }
        }
        if !self.regret_multiplier.is_finite() || self.regret_multiplier < 1.0 {
            bad(
                "regret_multiplier",
                format!("must be at least 1, got {}", self.regret_multiplier),
            );
        }
        if self.sampler.kind != SamplerKind::Mcmc && self.sampler.exact_threshold == 0 {
            bad("sampler.exact_threshold", "must be at least 1".into());
        }
        if self.workers == Some(0) {
            bad("workers", "must be at least 1".into());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }
}
