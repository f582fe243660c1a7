//! Paired replications of the two strategies and their aggregate comparison.
//!
//! Replication `r` draws one world and runs both strategies on it, each with its own
//! seed. Replications are spread over worker threads; results are put back in
//! replication order before anything is aggregated, so the output does not depend on
//! scheduling.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::deploy::{self, mean_std, RunConfig, RunResult, Strategy, TerminatedBy};
use crate::env::EnvironmentSpace;
use crate::error::{Error, Result};
use crate::rng;
use crate::world::WorldConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub replications: usize,
    pub seed: u64,
    pub world: WorldConfig,
    /// Template for both arms; `strategy` and `seed` are overridden per arm.
    pub run: RunConfig,
    /// Worker threads; 0 means one per available core.
    pub jobs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { replications: 1000, seed: 0, world: WorldConfig::default(), run: RunConfig::default(), jobs: 0 }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        self.world.validate()?;
        self.run.validate()
    }

    pub fn world_seed(&self, replication: usize) -> u64 {
        rng::derive(self.seed, 3 * replication as u64)
    }

    pub fn arm_seed(&self, replication: usize, strategy: Strategy) -> u64 {
        let offset = match strategy {
            Strategy::Accelerated => 1,
            Strategy::Random => 2,
        };
        rng::derive(self.seed, 3 * replication as u64 + offset)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedRun {
    pub replication: usize,
    pub world_digest: String,
    pub accelerated: RunResult,
    pub random: RunResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub replication: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Replications {
    pub pairs: Vec<PairedRun>,
    pub failures: Vec<Failure>,
}

fn run_pair(config: &BenchConfig, space: &EnvironmentSpace, replication: usize) -> Result<PairedRun> {
    let world = WorldConfig { seed: config.world_seed(replication), ..config.world.clone() }.generate(space)?;
    let arm = |strategy| {
        let cfg = RunConfig { strategy, seed: config.arm_seed(replication, strategy), ..config.run.clone() };
        deploy::run(&cfg, &world)
    };
    let accelerated = arm(Strategy::Accelerated)?;
    let random = arm(Strategy::Random)?;
    Ok(PairedRun { replication, world_digest: world.digest(), accelerated, random })
}

pub fn replicate(config: &BenchConfig, space: &EnvironmentSpace) -> Result<Replications> {
    config.validate()?;
    let jobs = match config.jobs {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        j => j,
    }
    .min(config.replications);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<PairedRun>>>> = Mutex::new((0..config.replications).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let r = next.fetch_add(1, Ordering::Relaxed);
                if r >= config.replications {
                    break;
                }
                let outcome = run_pair(config, space, r);
                slots.lock().expect("no worker panics while holding the lock")[r] = Some(outcome);
            });
        }
    });
    let mut out = Replications::default();
    for (replication, slot) in slots.into_inner().expect("workers joined").into_iter().enumerate() {
        match slot.expect("every replication ran") {
            Ok(pair) => out.pairs.push(pair),
            Err(e) => {
                log::warn!("replication {replication} failed: {e}");
                out.failures.push(Failure { replication, message: e.to_string() });
            }
        }
    }
    Ok(out)
}

/// What the summary needs from one run; recoverable from a curve file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub n_star: usize,
    pub f_obs: Vec<f64>,
    pub final_avg_z: f64,
}

impl From<&RunResult> for RunTrace {
    fn from(r: &RunResult) -> Self {
        Self {
            n_star: r.n_star,
            f_obs: r.records.iter().map(|x| x.f_obs).collect(),
            final_avg_z: r.summary.final_avg_z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    /// Mean observed risk over every deployment of the arm.
    pub mean_f: f64,
    /// Standard deviation of observed risk over every deployment of the arm.
    pub std_f: f64,
    /// Average of the per-run mean observed risk.
    pub mean_run_mean_f: f64,
    pub mean_final_avg_z: f64,
    pub mean_n_star: f64,
    pub median_n_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub replications: usize,
    pub accelerated: ArmSummary,
    pub random: ArmSummary,
    /// Mean n* of the random arm over mean n* of the accelerated arm.
    pub acceleration_ratio: f64,
    pub median_acceleration_ratio: f64,
    /// Median over pairs of n*(random) / n*(accelerated).
    pub median_pair_ratio: f64,
    /// Pairs where the accelerated run's mean observed risk is strictly lower.
    pub fraction_lower_mean_f: f64,
    /// Pairs where the accelerated run's observed-risk spread is strictly lower.
    pub fraction_lower_std_f: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn arm_summary(runs: &[&RunTrace]) -> ArmSummary {
    let all = runs.iter().flat_map(|r| r.f_obs.iter().copied());
    let (mean_f, std_f) = mean_std(all);
    let k = runs.len() as f64;
    let mut n_stars: Vec<f64> = runs.iter().map(|r| r.n_star as f64).collect();
    ArmSummary {
        mean_f,
        std_f,
        mean_run_mean_f: runs.iter().map(|r| r.f_obs.iter().sum::<f64>() / r.f_obs.len() as f64).sum::<f64>() / k,
        mean_final_avg_z: runs.iter().map(|r| r.final_avg_z).sum::<f64>() / k,
        mean_n_star: n_stars.iter().sum::<f64>() / k,
        median_n_star: median(&mut n_stars),
    }
}

/// Aggregates `(accelerated, random)` run pairs.
pub fn summarize_traces(pairs: &[(RunTrace, RunTrace)]) -> Result<BenchSummary> {
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("cannot summarize zero replications".into()));
    }
    let acc: Vec<&RunTrace> = pairs.iter().map(|p| &p.0).collect();
    let rnd: Vec<&RunTrace> = pairs.iter().map(|p| &p.1).collect();
    let accelerated = arm_summary(&acc);
    let random = arm_summary(&rnd);
    let mut ratios: Vec<f64> = pairs.iter().map(|(a, r)| r.n_star as f64 / a.n_star as f64).collect();
    let k = pairs.len() as f64;
    let mut lower_mean = 0usize;
    let mut lower_std = 0usize;
    for (a, r) in pairs {
        let (am, asd) = mean_std(a.f_obs.iter().copied());
        let (rm, rsd) = mean_std(r.f_obs.iter().copied());
        lower_mean += (am < rm) as usize;
        lower_std += (asd < rsd) as usize;
    }
    Ok(BenchSummary {
        replications: pairs.len(),
        acceleration_ratio: random.mean_n_star / accelerated.mean_n_star,
        median_acceleration_ratio: random.median_n_star / accelerated.median_n_star,
        median_pair_ratio: median(&mut ratios),
        fraction_lower_mean_f: lower_mean as f64 / k,
        fraction_lower_std_f: lower_std as f64 / k,
        accelerated,
        random,
    })
}

pub fn summarize(pairs: &[PairedRun]) -> Result<BenchSummary> {
    let traces: Vec<(RunTrace, RunTrace)> =
        pairs.iter().map(|p| (RunTrace::from(&p.accelerated), RunTrace::from(&p.random))).collect();
    summarize_traces(&traces)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub replication: usize,
    pub arm: Strategy,
    pub n: usize,
    pub avg_z: f64,
    pub f_obs: f64,
}

pub fn write_curves<W: Write>(pairs: &[PairedRun], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in pairs {
        for run in [&p.accelerated, &p.random] {
            for r in &run.records {
                w.serialize(CurveRow { replication: p.replication, arm: run.strategy, n: r.n, avg_z: r.avg_z, f_obs: r.f_obs })?;
            }
        }
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn export_curves(pairs: &[PairedRun], destination: &Path) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("no curves to export".into()));
    }
    let file = std::fs::File::create(destination).map_err(|e| Error::io(destination, e))?;
    let mut out = std::io::BufWriter::new(file);
    write_curves(pairs, &mut out)?;
    out.flush().map_err(|e| Error::io(destination, e))
}

pub fn read_curves<R: Read>(reader: R) -> Result<Vec<CurveRow>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize()
        .enumerate()
        .map(|(i, rec)| rec.map_err(|e| Error::Parse { line: i as u64 + 2, message: e.to_string() }))
        .collect()
}

pub fn load_curves(path: &Path) -> Result<Vec<CurveRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_curves(std::io::BufReader::new(file))
}

/// Rebuilds per-run traces from curve rows; rows of one run must be contiguous and
/// ordered by `n`, as `write_curves` emits them.
pub fn traces_from_curves(rows: &[CurveRow]) -> Result<Vec<(RunTrace, RunTrace)>> {
    let mut runs: Vec<(usize, Strategy, RunTrace)> = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let same = matches!(runs.last(), Some((rep, arm, _)) if *rep == row.replication && *arm == row.arm);
        if !same {
            runs.push((row.replication, row.arm, RunTrace { n_star: 0, f_obs: Vec::new(), final_avg_z: f64::NAN }));
        }
        let trace = &mut runs.last_mut().expect("just pushed").2;
        if row.n != trace.n_star + 1 {
            return Err(Error::Parse { line: i as u64 + 2, message: format!("expected n = {}, got {}", trace.n_star + 1, row.n) });
        }
        trace.n_star = row.n;
        trace.f_obs.push(row.f_obs);
        trace.final_avg_z = row.avg_z;
    }
    let mut pairs = Vec::new();
    let mut it = runs.into_iter();
    while let Some((rep, arm, a)) = it.next() {
        match (arm, it.next()) {
            (Strategy::Accelerated, Some((rep2, Strategy::Random, r))) if rep2 == rep => pairs.push((a, r)),
            _ => {
                return Err(Error::Parse {
                    line: 0,
                    message: format!("replication {rep} lacks an accelerated/random pair"),
                })
            }
        }
    }
    Ok(pairs)
}

/// Counts of how runs ended, per arm.
pub fn termination_counts(pairs: &[PairedRun], strategy: Strategy) -> (usize, usize) {
    let runs = pairs.iter().map(|p| match strategy {
        Strategy::Accelerated => &p.accelerated,
        Strategy::Random => &p.random,
    });
    runs.fold((0, 0), |(t, m), r| match r.terminated_by {
        TerminatedBy::ToleranceMet => (t + 1, m),
        TerminatedBy::MaxIters => (t, m + 1),
    })
}
