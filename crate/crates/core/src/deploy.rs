//! The sequential deployment loop for the accelerated and random strategies.
//!
//! Every deployment produces one [`IterationRecord`]. The selection columns of a record
//! (`alpha`, `feasible_count`, `fallback`, `gain`, `f_hat`) describe how that record's
//! environment was chosen, using the fit after the previous deployment; `z_n` and
//! `avg_z` describe the fit after the record's own observation. The first `n_init`
//! records come from the random initial design and carry no selection data.

use std::io::Write;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acquire::{self, AcquireConfig, DEFAULT_TAU};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::fit::{self, DeploymentHistory, FitConfig, FitResult};
use crate::rng::{self, SimRng, Stream};
use crate::surrogate::{IntensityModel, Theta};
use crate::world::{self, ObservationMode, RiskTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Accelerated,
    Random,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Accelerated => "accelerated",
            Strategy::Random => "random",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accelerated" => Ok(Strategy::Accelerated),
            "random" => Ok(Strategy::Random),
            other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub strategy: Strategy,
    /// Tolerance on the average estimation error `z(n)`.
    pub tau: f64,
    /// Minimum number of deployments before the tolerance may stop a run.
    pub n_min: usize,
    /// Size of the random initial design.
    pub n_init: usize,
    pub max_iters: usize,
    pub observation: ObservationMode,
    pub seed: u64,
    pub fit: FitConfig,
    pub acquire: AcquireConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Accelerated,
            tau: DEFAULT_TAU,
            n_min: 100,
            n_init: 25,
            max_iters: 5000,
            observation: ObservationMode::Exact,
            seed: 0,
            fit: FitConfig::default(),
            acquire: AcquireConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_init == 0 || self.n_min < self.n_init || self.max_iters < self.n_init {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= n_init ({}) <= n_min ({}) and n_init <= max_iters ({})",
                self.n_init, self.n_min, self.max_iters
            )));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!("tau {} must be a finite nonnegative number", self.tau)));
        }
        self.observation.validate()?;
        self.fit.validate()?;
        self.acquire.validate()
    }

    pub fn xi(&self) -> f64 {
        self.acquire.xi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub n: usize,
    pub e1: usize,
    pub e2: usize,
    pub f_obs: f64,
    pub z_n: f64,
    pub avg_z: f64,
    pub alpha: Option<f64>,
    pub feasible_count: Option<usize>,
    pub fallback: bool,
    pub gain: Option<f64>,
    pub f_hat: Option<f64>,
}

impl IterationRecord {
    pub fn environment(&self) -> Environment {
        Environment::new(self.e1, self.e2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminatedBy {
    ToleranceMet,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mean_f: f64,
    pub std_f: f64,
    pub final_z: f64,
    pub final_avg_z: f64,
    /// Mean of `avg_z` over all records.
    pub running_avg_z: f64,
}

impl RunSummary {
    pub fn from_records(records: &[IterationRecord]) -> Self {
        let n = records.len() as f64;
        let (mean_f, std_f) = mean_std(records.iter().map(|r| r.f_obs));
        let last = records.last();
        Self {
            mean_f,
            std_f,
            final_z: last.map_or(f64::NAN, |r| r.z_n),
            final_avg_z: last.map_or(f64::NAN, |r| r.avg_z),
            running_avg_z: records.iter().map(|r| r.avg_z).sum::<f64>() / n,
        }
    }
}

/// Population mean and standard deviation.
pub fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (count, sum) = values.clone().fold((0usize, 0.0), |(c, s), v| (c + 1, s + v));
    if count == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = sum / count as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub strategy: Strategy,
    pub seed: u64,
    pub world_digest: String,
    pub n_star: usize,
    pub terminated_by: TerminatedBy,
    pub final_theta: Theta,
    pub summary: RunSummary,
    #[serde(skip)]
    pub records: Vec<IterationRecord>,
}

impl RunResult {
    pub fn write_log<W: Write>(&self, writer: W) -> Result<()> {
        write_log(&self.records, writer)
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn write_log<W: Write>(records: &[IterationRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn read_log<R: std::io::Read>(reader: R) -> Result<Vec<IterationRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize()
        .enumerate()
        .map(|(i, rec)| rec.map_err(|e| Error::Parse { line: i as u64 + 2, message: e.to_string() }))
        .collect()
}

/// True once the average error is within `tau` and at least `n_min` deployments ran.
pub fn should_terminate(n: usize, avg_z: f64, config: &RunConfig) -> bool {
    avg_z <= config.tau && n >= config.n_min
}

/// Deploys `n_init` distinct cells drawn uniformly without replacement.
pub fn initialize<R: Rng + ?Sized, O: Rng + ?Sized>(
    world: &RiskTable,
    n_init: usize,
    mode: ObservationMode,
    rng: &mut R,
    observation_rng: &mut O,
) -> Result<DeploymentHistory> {
    let space = world.space();
    if n_init > space.cardinality() {
        return Err(Error::InvalidConfig(format!(
            "cannot draw {n_init} distinct initial cells from {}",
            space.cardinality()
        )));
    }
    let mut history = DeploymentHistory::new(space.clone());
    for i in index::sample(rng, space.cardinality(), n_init) {
        let env = space.environment_at(i);
        history.push(env, world::observe(world, env, mode, observation_rng))?;
    }
    Ok(history)
}

/// Independent random streams for one run.
#[derive(Debug, Clone)]
pub struct RunRngs {
    pub init: SimRng,
    pub observe: SimRng,
    pub ties: SimRng,
    pub random: SimRng,
}

impl RunRngs {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            init: rng::stream(config.seed, Stream::Initialization),
            observe: rng::stream(config.seed, Stream::Observation),
            ties: rng::stream(rng::derive(config.seed, config.acquire.tie_seed), Stream::TieBreak),
            random: rng::stream(config.seed, Stream::RandomSelection),
        }
    }
}

/// Loop state after `n` deployments.
#[derive(Debug, Clone)]
pub struct RunState {
    pub history: DeploymentHistory,
    pub current: FitResult,
    pub previous_theta: Theta,
    pub alpha: Option<f64>,
    fit_config: FitConfig,
}

impl RunState {
    pub fn n(&self) -> usize {
        self.history.len()
    }

    fn model(&self, theta: &Theta) -> IntensityModel {
        IntensityModel::new(theta.clone(), self.history.space().grid().clone())
            .expect("fitted parameters match the space")
    }

    fn refit(&mut self) -> Result<()> {
        let space = self.history.space().clone();
        let next = fit::fit(&self.history, &space, &self.fit_config, Some(&self.current.theta))?;
        self.previous_theta = std::mem::replace(&mut self.current, next).theta;
        Ok(())
    }
}

fn fit_config_for(config: &RunConfig) -> FitConfig {
    FitConfig { seed: rng::derive(config.seed, config.fit.seed), ..config.fit.clone() }
}

/// Builds the initial design and one record per initial deployment, each with the fit
/// of the history up to that point.
pub fn start(world: &RiskTable, config: &RunConfig, rngs: &mut RunRngs) -> Result<(RunState, Vec<IterationRecord>)> {
    let initial = initialize(world, config.n_init, config.observation, &mut rngs.init, &mut rngs.observe)?;
    let space = world.space().clone();
    let fit_config = fit_config_for(config);
    let mut history = DeploymentHistory::new(space.clone());
    let mut records = Vec::with_capacity(config.n_init);
    let mut state: Option<RunState> = None;
    for &(env, value) in initial.entries() {
        history.push(env, value)?;
        let warm = state.as_ref().map(|s| s.current.theta.clone());
        let result = fit::fit(&history, &space, &fit_config, warm.as_ref())?;
        let previous_theta = match state.take() {
            Some(s) => s.current.theta,
            None => fit::initial_theta(&history),
        };
        records.push(IterationRecord {
            n: history.len(),
            e1: env.e1,
            e2: env.e2,
            f_obs: value,
            z_n: result.residual_z,
            avg_z: result.avg_uncertainty,
            alpha: None,
            feasible_count: None,
            fallback: false,
            gain: None,
            f_hat: None,
        });
        state = Some(RunState {
            history: history.clone(),
            current: result,
            previous_theta,
            alpha: None,
            fit_config: fit_config.clone(),
        });
    }
    Ok((state.expect("n_init >= 1"), records))
}

/// One deployment: choose a cell, observe it, refit.
pub fn step(state: &mut RunState, world: &RiskTable, config: &RunConfig, rngs: &mut RunRngs) -> Result<IterationRecord> {
    let space = world.space();
    let mut record = IterationRecord {
        n: 0,
        e1: 0,
        e2: 0,
        f_obs: 0.0,
        z_n: 0.0,
        avg_z: 0.0,
        alpha: None,
        feasible_count: None,
        fallback: false,
        gain: None,
        f_hat: None,
    };
    let env = match config.strategy {
        Strategy::Accelerated => {
            let z = state.current.avg_uncertainty;
            let alpha = acquire::alpha_of(z, state.alpha, &config.acquire);
            state.alpha = Some(alpha);
            let now = state.model(&state.current.theta);
            let prev = state.model(&state.previous_theta);
            let sel = acquire::select_next(space, &state.history, &now, &prev, alpha, z, &config.acquire, &mut rngs.ties);
            record.alpha = Some(alpha);
            record.feasible_count = Some(sel.feasible_count);
            record.fallback = sel.fallback;
            record.gain = Some(sel.gain);
            record.f_hat = Some(sel.predicted);
            sel.environment
        }
        Strategy::Random => space.environment_at(rngs.random.random_range(0..space.cardinality())),
    };
    let value = world::observe(world, env, config.observation, &mut rngs.observe);
    state.history.push(env, value)?;
    state.refit()?;
    record.n = state.n();
    record.e1 = env.e1;
    record.e2 = env.e2;
    record.f_obs = value;
    record.z_n = state.current.residual_z;
    record.avg_z = state.current.avg_uncertainty;
    Ok(record)
}

pub fn run(config: &RunConfig, world: &RiskTable) -> Result<RunResult> {
    config.validate()?;
    let mut rngs = RunRngs::new(config);
    let (mut state, mut records) = start(world, config, &mut rngs)?;
    let terminated_by = loop {
        let n = state.n();
        if should_terminate(n, state.current.avg_uncertainty, config) {
            break TerminatedBy::ToleranceMet;
        }
        if n >= config.max_iters {
            break TerminatedBy::MaxIters;
        }
        records.push(step(&mut state, world, config, &mut rngs)?);
    };
    log::debug!(
        "{} run seed {} stopped at n = {} ({:?}), z(n) = {:.3e}",
        config.strategy,
        config.seed,
        records.len(),
        terminated_by,
        state.current.avg_uncertainty
    );
    Ok(RunResult {
        strategy: config.strategy,
        seed: config.seed,
        world_digest: world.digest(),
        n_star: records.len(),
        terminated_by,
        final_theta: state.current.theta.clone(),
        summary: RunSummary::from_records(&records),
        records,
    })
}

/// Blended score of a logged accelerated selection, recomputed from the log: the
/// selection in row `i` used `alpha` and `f_hat` from row `i` and `avg_z` from row `i - 1`.
pub fn replay_scores(records: &[IterationRecord]) -> Vec<(usize, f64, bool)> {
    records
        .windows(2)
        .filter_map(|w| {
            let (prev, cur) = (&w[0], &w[1]);
            match (cur.alpha, cur.f_hat) {
                (Some(a), Some(f)) => Some((cur.n, acquire::blended_score(f, a, prev.avg_z), cur.fallback)),
                _ => None,
            }
        })
        .collect()
}
