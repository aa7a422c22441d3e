//! Experiment configuration.
//!
//! Values are resolved from three layers, later layers winning: built-in
//! defaults, a TOML file (`--config`, or `DSBO_CONFIG` when the flag is
//! absent), and command-line flags.

use std::path::{Path, PathBuf};

use dsbo::acquisition::{BetaSchedule, LcbParams};
use dsbo::bo::{BoConfig, Variant};
use dsbo::ep::DEFAULT_NU;
use dsbo::objectives::{Family, NoiseModel};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key, message: message.into() }
}

/// One layer of settings; every field is optional so layers can be merged.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub suite: Option<String>,
    pub variants: Option<Vec<String>>,
    pub runs: Option<usize>,
    pub budget: Option<usize>,
    pub noise_std: Option<f64>,
    pub epsilon_b: Option<f64>,
    pub removal_radius: Option<f64>,
    /// Constant LCB weight. Mutually exclusive with `beta_delta`.
    pub beta: Option<f64>,
    /// Use the growing schedule with this confidence parameter.
    pub beta_delta: Option<f64>,
    pub nu: Option<f64>,
    pub base_seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub max_virtual_retries: Option<usize>,
    pub init_inset: Option<f64>,
    pub refit_stride: Option<usize>,
    pub hyper_restarts: Option<usize>,
}

impl Settings {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text, path)
    }

    /// `other` wins wherever it sets a value.
    pub fn merged(self, other: Settings) -> Settings {
        Settings {
            suite: other.suite.or(self.suite),
            variants: other.variants.or(self.variants),
            runs: other.runs.or(self.runs),
            budget: other.budget.or(self.budget),
            noise_std: other.noise_std.or(self.noise_std),
            epsilon_b: other.epsilon_b.or(self.epsilon_b),
            removal_radius: other.removal_radius.or(self.removal_radius),
            beta: other.beta.or(self.beta),
            beta_delta: other.beta_delta.or(self.beta_delta),
            nu: other.nu.or(self.nu),
            base_seed: other.base_seed.or(self.base_seed),
            out: other.out.or(self.out),
            workers: other.workers.or(self.workers),
            max_virtual_retries: other.max_virtual_retries.or(self.max_virtual_retries),
            init_inset: other.init_inset.or(self.init_inset),
            refit_stride: other.refit_stride.or(self.refit_stride),
            hyper_restarts: other.hyper_restarts.or(self.hyper_restarts),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub suite: Family,
    pub variants: Vec<Variant>,
    pub runs: usize,
    pub budget: usize,
    pub noise_std: f64,
    pub epsilon_b: f64,
    pub removal_radius: f64,
    pub beta: BetaSchedule,
    pub nu: f64,
    pub base_seed: u64,
    pub out: PathBuf,
    pub workers: usize,
    pub max_virtual_retries: usize,
    pub init_inset: f64,
    pub refit_stride: usize,
    pub hyper_restarts: usize,
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

impl ExperimentConfig {
    pub fn resolve(s: Settings) -> Result<Self, ConfigError> {
        let suite = match s.suite.as_deref() {
            None => Family::Mnd,
            Some(v) => v.parse().map_err(|e: dsbo::Error| invalid("suite", e.to_string()))?,
        };
        let mut variants = match &s.variants {
            None => Variant::ALL.to_vec(),
            Some(v) => v
                .iter()
                .map(|n| n.parse().map_err(|e: dsbo::Error| invalid("variants", e.to_string())))
                .collect::<Result<Vec<_>, _>>()?,
        };
        variants.sort();
        variants.dedup();
        if variants.is_empty() {
            return Err(invalid("variants", "at least one variant is required"));
        }
        let beta = match (s.beta, s.beta_delta) {
            (Some(_), Some(_)) => return Err(invalid("beta", "set either beta or beta_delta, not both")),
            (_, Some(delta)) => BetaSchedule::Theoretical { delta },
            (b, None) => BetaSchedule::Constant(b.unwrap_or(2.0)),
        };
        let cfg = ExperimentConfig {
            suite,
            variants,
            runs: s.runs.unwrap_or(20),
            budget: s.budget.unwrap_or(30),
            noise_std: s.noise_std.unwrap_or(0.1),
            epsilon_b: s.epsilon_b.unwrap_or(0.01),
            removal_radius: s.removal_radius.unwrap_or(0.01),
            beta,
            nu: s.nu.unwrap_or(DEFAULT_NU),
            base_seed: s.base_seed.unwrap_or(0),
            out: s.out.unwrap_or_else(|| PathBuf::from("results")),
            workers: s.workers.unwrap_or_else(default_workers),
            max_virtual_retries: s.max_virtual_retries.unwrap_or(3),
            init_inset: s.init_inset.unwrap_or(0.01),
            refit_stride: s.refit_stride.unwrap_or(1),
            hyper_restarts: s.hyper_restarts.unwrap_or(5),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.runs == 0 {
            return Err(invalid("runs", "must be >= 1"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(invalid("noise_std", format!("must be >= 0, got {}", self.noise_std)));
        }
        if !(0.0..0.5).contains(&self.epsilon_b) {
            return Err(invalid("epsilon_b", format!("must be in [0, 0.5), got {}", self.epsilon_b)));
        }
        if !(self.removal_radius >= 0.0 && self.removal_radius.is_finite()) {
            return Err(invalid("removal_radius", format!("must be >= 0, got {}", self.removal_radius)));
        }
        match self.beta {
            BetaSchedule::Constant(b) if !(b >= 0.0 && b.is_finite()) => {
                return Err(invalid("beta", format!("must be >= 0, got {b}")));
            }
            BetaSchedule::Theoretical { delta } if !(delta > 0.0 && delta < 1.0) => {
                return Err(invalid("beta_delta", format!("must be in (0, 1), got {delta}")));
            }
            _ => {}
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(invalid("nu", format!("must be > 0, got {}", self.nu)));
        }
        if self.workers == 0 {
            return Err(invalid("workers", "must be >= 1"));
        }
        if !(0.0..0.5).contains(&self.init_inset) {
            return Err(invalid("init_inset", format!("must be in [0, 0.5), got {}", self.init_inset)));
        }
        if self.refit_stride == 0 {
            return Err(invalid("refit_stride", "must be >= 1"));
        }
        if self.hyper_restarts == 0 {
            return Err(invalid("hyper_restarts", "must be >= 1"));
        }
        Ok(())
    }

    /// Optimizer settings for one run; `seed` is shared by all variants of a run.
    pub fn bo_config(&self, variant: Variant, seed: u64) -> BoConfig {
        let mut c = BoConfig {
            variant,
            epsilon_b: self.epsilon_b,
            removal_radius: self.removal_radius,
            budget: self.budget,
            lcb: LcbParams { schedule: self.beta.clone(), ..LcbParams::default() },
            max_virtual_retries: self.max_virtual_retries,
            seed,
            noise: NoiseModel { std: self.noise_std },
            init_inset: self.init_inset,
            nu: self.nu,
            refit_stride: self.refit_stride,
            ..BoConfig::default()
        };
        c.hyper_fit.restarts = self.hyper_restarts;
        c
    }
}
