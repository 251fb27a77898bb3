//! TOML experiment configuration. Every section is optional and unknown keys
//! are rejected before any computation starts.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fkl_core::fkl::{FklConfig, TimeSampler};
use fkl_core::metrics::MetricSettings;
use fkl_core::sde::SystemSpec;
use fkl_core::spectral::Extension;
use fkl_core::velocity::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::pipeline::{Backend, GaussianCase, NoiseSpec};

pub const SEED_ENV: &str = "FKL_SEED";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub system: Option<SystemSpec>,
    pub simulation: SimulationSection,
    pub spectral: SpectralSection,
    pub noise: NoiseSpec,
    pub field: FieldSection,
    pub fkl: FklSection,
    pub metrics: MetricSettings,
    pub gaussian: GaussianCase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    /// Falls back to the system's default horizon.
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub n_paths: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            horizon: None,
            dt: None,
            n_paths: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    pub n_modes: usize,
    pub extension: Extension,
}

impl Default for SpectralSection {
    fn default() -> Self {
        Self {
            n_modes: 8,
            extension: Extension::Mirror,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSection {
    pub backend: Backend,
    pub split: bool,
    /// Fresh samples per measure for the Gaussian case.
    pub pool_size: usize,
    pub train: TrainConfig,
}

impl Default for FieldSection {
    fn default() -> Self {
        Self {
            backend: Backend::default(),
            split: true,
            pool_size: 2000,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FklSection {
    pub n_function_samples: usize,
    pub n_time_per_function: usize,
    /// Defaults to all stored modes.
    pub n_sum_modes: Option<usize>,
    pub sampler: TimeSampler,
}

impl Default for FklSection {
    fn default() -> Self {
        Self {
            n_function_samples: 500,
            n_time_per_function: 100,
            n_sum_modes: None,
            sampler: TimeSampler::default(),
        }
    }
}

impl FklSection {
    pub fn to_config(&self, n_modes: usize, seed: u64) -> FklConfig {
        FklConfig {
            n_function_samples: self.n_function_samples,
            n_time_per_function: self.n_time_per_function,
            n_sum_modes: self.n_sum_modes.unwrap_or(n_modes),
            sampler: self.sampler,
            seed,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.fkl.sampler.validate()?;
        self.field.train.validate()?;
        if let Some(system) = &self.system {
            system.build()?;
        }
        anyhow::ensure!(self.spectral.n_modes >= 1, "spectral.n_modes must be at least 1");
        Ok(())
    }

    /// Seed precedence: command-line flag, then the config file, then the
    /// `FKL_SEED` environment variable, then zero.
    pub fn resolve_seed(&self, flag: Option<u64>) -> Result<u64> {
        if let Some(s) = flag.or(self.seed) {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().with_context(|| format!("{SEED_ENV}={v} is not an unsigned integer")),
            Err(_) => Ok(0),
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}
