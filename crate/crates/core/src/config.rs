//! JSON configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csvio::parse_scored_csv;
use crate::pfs::Measure;
use crate::rank::Alternative;
use crate::response::{DataError, ResponseMatrix};
use crate::rng::{derive_seed, domain, RngSpec};
use crate::sim::{sample_population, Aberrance, Dist, IrtItemBank, PopulationConfig, SimError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("no seed given: set \"seed\" in the config or pass --seed")]
    MissingSeed,
    #[error("unsupported generator {name} v{version}")]
    UnsupportedRng { name: String, version: u32 },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Data { path: String, source: DataError },
    #[error(transparent)]
    Sim(#[from] SimError),
}

fn default_j() -> usize {
    20
}
fn default_n_human() -> usize {
    380
}
fn default_n_aberrant() -> usize {
    20
}
fn default_a_dist() -> Dist {
    Dist::LogNormal {
        mu: 0.0,
        sigma: 0.25,
    }
}
fn default_guessing() -> f64 {
    0.2
}
fn default_agent_name() -> String {
    "sim".to_string()
}

/// Simulation config. Every field has a default; only the seed must be
/// supplied, here or on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(rename = "J", default = "default_j")]
    pub n_items: usize,
    #[serde(default = "default_n_human")]
    pub n_human: usize,
    #[serde(default = "default_n_aberrant")]
    pub n_aberrant: usize,
    #[serde(default = "Dist::standard_normal")]
    pub theta_dist: Dist,
    #[serde(default = "default_a_dist")]
    pub a_dist: Dist,
    #[serde(default = "Dist::standard_normal")]
    pub b_dist: Dist,
    #[serde(default = "default_guessing")]
    pub c: f64,
    #[serde(default)]
    pub aberrance: Aberrance,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Item-bank seed; defaults to `seed`. Configs sharing a bank seed (and
    /// bank parameters) answer the same items.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank_seed: Option<u64>,
    #[serde(default = "default_agent_name")]
    pub agent_name: String,
    #[serde(default)]
    pub rng: RngSpec,
}

impl Default for SimConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl SimConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|source| ConfigError::Parse {
            path: origin.to_string(),
            source,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.rng.is_supported() {
            return Err(ConfigError::UnsupportedRng {
                name: self.rng.name.clone(),
                version: self.rng.version,
            });
        }
        if self.n_items == 0 {
            return Err(ConfigError::Invalid("J must be at least 1".into()));
        }
        if self.n_human + self.n_aberrant == 0 {
            return Err(ConfigError::Invalid("n_human + n_aberrant must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.c) {
            return Err(ConfigError::Invalid(format!("c must lie in [0, 1), got {}", self.c)));
        }
        if self.agent_name.is_empty() || self.agent_name.contains(',') {
            return Err(ConfigError::Invalid(format!("invalid agent_name '{}'", self.agent_name)));
        }
        for d in [&self.theta_dist, &self.a_dist, &self.b_dist] {
            d.validate()?;
        }
        Ok(())
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.seed.ok_or(ConfigError::MissingSeed)
    }

    pub fn bank(&self) -> Result<IrtItemBank, ConfigError> {
        let seed = self.bank_seed.map_or_else(|| self.seed(), Ok)?;
        Ok(IrtItemBank::generate(
            self.n_items,
            &self.a_dist,
            &self.b_dist,
            self.c,
            seed,
        )?)
    }

    pub fn population(&self) -> PopulationConfig {
        PopulationConfig {
            theta_dist: self.theta_dist.clone(),
            aberrance: self.aberrance.clone(),
            agent_name: self.agent_name.clone(),
        }
    }

    /// Validates and draws the configured population.
    pub fn generate(&self) -> Result<ResponseMatrix, ConfigError> {
        self.validate()?;
        let seed = self.seed()?;
        let bank = self.bank()?;
        Ok(sample_population(
            self.n_human,
            self.n_aberrant,
            &bank,
            &self.population(),
            seed,
        )?)
    }
}

/// A data source: a scored-matrix CSV path or an inline simulation config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSpec {
    Path(PathBuf),
    Sim(SimConfig),
}

impl DataSpec {
    /// Group label: the file stem or the simulated agent name.
    pub fn label(&self) -> String {
        match self {
            DataSpec::Path(p) => p
                .file_stem()
                .map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()),
            DataSpec::Sim(cfg) => cfg.agent_name.clone(),
        }
    }

    /// Fills in an unseeded inline simulation: its seed becomes
    /// `derive_seed(master, SOURCE + index)` and, unless set, its bank seed
    /// becomes `master`, so every source seeded this way answers one bank.
    pub fn seeded(&self, master: u64, index: u64) -> DataSpec {
        match self {
            DataSpec::Sim(cfg) if cfg.seed.is_none() => DataSpec::Sim(SimConfig {
                seed: Some(derive_seed(master, domain::SOURCE + index)),
                bank_seed: cfg.bank_seed.or(Some(master)),
                ..cfg.clone()
            }),
            other => other.clone(),
        }
    }

    /// Loads the matrix; relative paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<ResponseMatrix, ConfigError> {
        match self {
            DataSpec::Path(p) => {
                let full = if p.is_absolute() { p.clone() } else { base.join(p) };
                parse_scored_csv(&full).map_err(|source| match source {
                    DataError::Io(message) => ConfigError::Io {
                        path: full.display().to_string(),
                        source: std::io::Error::other(message),
                    },
                    source => ConfigError::Data {
                        path: full.display().to_string(),
                        source,
                    },
                })
            }
            DataSpec::Sim(cfg) => cfg.generate(),
        }
    }
}

/// How item difficulties are estimated inside a pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultySource {
    /// From the mixed (polluted) matrix.
    #[default]
    Mixed,
    /// From the human rows of the mixed matrix only.
    HumanOnly,
}

fn all_measures() -> Vec<Measure> {
    Measure::ALL.to_vec()
}

/// Config for the compare, multigroup and sensitivity pipelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub humans: DataSpec,
    pub agents: Vec<DataSpec>,
    #[serde(default)]
    pub levels: Vec<f64>,
    #[serde(default = "all_measures")]
    pub measures: Vec<Measure>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub alternative: Alternative,
    #[serde(default)]
    pub difficulty: DifficultySource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instrument: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|source| ConfigError::Parse {
            path: origin.to_string(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.agents.is_empty() {
            return Err(ConfigError::Invalid("at least one agent source is required".into()));
        }
        for &l in &self.levels {
            if !(l > 0.0 && l < 1.0) {
                return Err(ConfigError::Invalid(format!(
                    "pollution level {l} must lie strictly inside (0, 1)"
                )));
            }
        }
        if self.alternative == Alternative::TwoSided {
            return Err(ConfigError::Invalid("alternative must be less or greater".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for m in &self.measures {
            if !seen.insert(*m) {
                return Err(ConfigError::Invalid(format!("measure {m} listed twice")));
            }
        }
        Ok(())
    }

    pub fn instrument(&self) -> String {
        self.instrument.clone().unwrap_or_else(|| self.humans.label())
    }

    /// The config with every unseeded inline source seeded from `master`
    /// (humans are source 0, agents follow in order).
    pub fn seeded(&self, master: u64) -> Self {
        Self {
            humans: self.humans.seeded(master, 0),
            agents: self
                .agents
                .iter()
                .enumerate()
                .map(|(k, a)| a.seeded(master, k as u64 + 1))
                .collect(),
            ..self.clone()
        }
    }
}
