//! TOML configuration file. Every section is optional; missing keys take the library
//! defaults, unknown keys are rejected.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use safedeploy::acquire::DEFAULT_TAU;
use safedeploy::deploy::Strategy;
use safedeploy::ingest::RiskyEventCriteria;
use safedeploy::{AcquireConfig, EnvironmentSpace, FitConfig, ObservationMode, RunConfig, TimeGrid, WorldConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub space: SpaceSection,
    pub world: WorldConfig,
    pub run: RunSection,
    pub fit: FitConfig,
    pub acquire: AcquireSection,
    pub bench: BenchSection,
    pub ingest: IngestSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpaceSection {
    pub cluster_count: usize,
    pub time_groups: usize,
    /// Explicit group boundaries in hours from 0 to 24; overrides `time_groups`.
    pub boundaries: Option<Vec<f64>>,
}

impl Default for SpaceSection {
    fn default() -> Self {
        Self { cluster_count: 16, time_groups: 8, boundaries: None }
    }
}

impl SpaceSection {
    pub fn grid(&self) -> safedeploy::Result<TimeGrid> {
        match &self.boundaries {
            Some(b) => TimeGrid::new(b.clone()),
            None => TimeGrid::uniform(self.time_groups),
        }
    }

    pub fn space(&self) -> safedeploy::Result<EnvironmentSpace> {
        EnvironmentSpace::new(self.cluster_count, self.grid()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub strategy: Strategy,
    pub tau: f64,
    pub n_min: usize,
    pub n_init: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub observation: ObservationMode,
}

impl Default for RunSection {
    fn default() -> Self {
        let d = RunConfig::default();
        Self {
            strategy: d.strategy,
            tau: d.tau,
            n_min: d.n_min,
            n_init: d.n_init,
            max_iters: d.max_iters,
            seed: d.seed,
            observation: d.observation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquireSection {
    pub xi: f64,
    /// Defaults to `1 / tau`.
    pub kappa: Option<f64>,
    pub tie_seed: u64,
}

impl Default for AcquireSection {
    fn default() -> Self {
        let d = AcquireConfig::default();
        Self { xi: d.xi, kappa: None, tie_seed: d.tie_seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub replications: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        let d = safedeploy::BenchConfig::default();
        Self { replications: d.replications, seed: d.seed, jobs: d.jobs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestSection {
    pub k: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub max_range: f64,
    pub rate_threshold: f64,
}

impl Default for IngestSection {
    fn default() -> Self {
        let c = RiskyEventCriteria::default();
        Self { k: 16, max_iters: 100, seed: 0, max_range: c.max_range, rate_threshold: c.rate_threshold }
    }
}

impl IngestSection {
    pub fn criteria(&self) -> RiskyEventCriteria {
        RiskyEventCriteria { max_range: self.max_range, rate_threshold: self.rate_threshold }
    }
}

/// `1 / tau`, or `1 / DEFAULT_TAU` when the tolerance is zero.
pub fn default_kappa(tau: f64) -> f64 {
    if tau > 0.0 {
        1.0 / tau
    } else {
        1.0 / DEFAULT_TAU
    }
}

impl CliConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn run_config(&self) -> RunConfig {
        let r = &self.run;
        RunConfig {
            strategy: r.strategy,
            tau: r.tau,
            n_min: r.n_min,
            n_init: r.n_init,
            max_iters: r.max_iters,
            observation: r.observation,
            seed: r.seed,
            fit: self.fit.clone(),
            acquire: AcquireConfig {
                xi: self.acquire.xi,
                kappa: self.acquire.kappa.unwrap_or_else(|| default_kappa(r.tau)),
                tie_seed: self.acquire.tie_seed,
            },
        }
    }
}
