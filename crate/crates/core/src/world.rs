//! Ground-truth risk tables and the channel through which deployments observe them.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Binomial, Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{Environment, EnvironmentSpace, TimeGrid, DAY_HOURS};
use crate::error::{Error, Result};

/// True risky-event probability for every cell of a space, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskTable {
    space: EnvironmentSpace,
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RiskRow {
    cluster: usize,
    time_group: usize,
    risk: f64,
}

impl RiskTable {
    pub fn from_values(space: EnvironmentSpace, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.cardinality() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} cells",
                values.len(),
                space.cardinality()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidConfig(format!(
                "risk {v} at cell {} is not a probability",
                space.environment_at(i)
            )));
        }
        Ok(Self { space, values })
    }

    pub fn space(&self) -> &EnvironmentSpace {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, env: Environment) -> f64 {
        self.values[self.space.index_of(env)]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Content hash over the dimensions, grid and exact value bits.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.space.cluster_count() as u64).to_le_bytes());
        for b in self.space.grid().boundaries() {
            hasher.update(b.to_bits().to_le_bytes());
        }
        for v in &self.values {
            hasher.update(v.to_bits().to_le_bytes());
        }
        hasher.finalize().iter().take(16).map(|b| format!("{b:02x}")).collect()
    }

    /// Writes `cluster,time_group,risk` rows in enumeration order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (i, &risk) in self.values.iter().enumerate() {
            let env = self.space.environment_at(i);
            w.serialize(RiskRow { cluster: env.e1, time_group: env.e2, risk })?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    /// Reads a table; dimensions are inferred from the largest indices and every cell
    /// must appear exactly once. `grid` defaults to equal-width groups.
    pub fn read_csv<R: Read>(reader: R, grid: Option<TimeGrid>) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["cluster", "time_group", "risk"] {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header cluster,time_group,risk, got {}", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut rows = Vec::new();
        for (i, rec) in r.deserialize::<RiskRow>().enumerate() {
            let line = i as u64 + 2;
            let row = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
            if row.cluster == 0 || row.time_group == 0 {
                return Err(Error::Parse { line, message: "indices are 1-based".into() });
            }
            rows.push((line, row));
        }
        let m1 = rows.iter().map(|(_, r)| r.cluster).max().unwrap_or(0);
        let m2 = rows.iter().map(|(_, r)| r.time_group).max().unwrap_or(0);
        if m1 == 0 {
            return Err(Error::Parse { line: 1, message: "risk table has no rows".into() });
        }
        let grid = match grid {
            Some(g) if g.group_count() != m2 => {
                return Err(Error::DimensionMismatch(format!(
                    "table has {m2} time groups, grid has {}",
                    g.group_count()
                )))
            }
            Some(g) => g,
            None => TimeGrid::uniform(m2)?,
        };
        let space = EnvironmentSpace::new(m1, grid)?;
        let mut values = vec![f64::NAN; space.cardinality()];
        for (line, row) in rows {
            let idx = space.index_of(Environment::new(row.cluster, row.time_group));
            if !values[idx].is_nan() {
                return Err(Error::Parse { line, message: format!("duplicate cell ({}, {})", row.cluster, row.time_group) });
            }
            if !(0.0..=1.0).contains(&row.risk) {
                return Err(Error::Parse { line, message: format!("risk {} is not a probability", row.risk) });
            }
            values[idx] = row.risk;
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::Parse { line: 0, message: format!("missing cell {}", space.environment_at(i)) });
        }
        Self::from_values(space, values)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: &std::path::Path, grid: Option<TimeGrid>) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), grid)
    }
}

/// Parameters of the synthetic world generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub seed: u64,
    pub base_risk: f64,
    pub diurnal_amplitude: f64,
    /// Range of the log-uniform per-cluster multiplier.
    pub cluster_spread: (f64, f64),
    /// Log-scale standard deviation of the per-cell multiplicative noise.
    pub noise_sigma: f64,
    pub floor: f64,
    pub ceiling: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            base_risk: 1.5e-3,
            diurnal_amplitude: 2.0e-3,
            cluster_spread: (0.2, 5.0),
            noise_sigma: 0.25,
            floor: 1e-5,
            ceiling: 0.05,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.cluster_spread;
        let ok = self.floor.is_finite()
            && self.ceiling.is_finite()
            && 0.0 <= self.floor
            && self.floor < self.ceiling
            && self.ceiling <= 1.0
            && self.diurnal_amplitude >= 0.0
            && self.noise_sigma >= 0.0
            && self.noise_sigma.is_finite()
            && self.base_risk >= 0.0
            && lo > 0.0
            && lo <= hi
            && hi.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("world config out of range: {self:?}")))
        }
    }

    /// Generates the table for this config's own seed.
    pub fn generate(&self, space: &EnvironmentSpace) -> Result<RiskTable> {
        let mut rng = crate::rng::stream(self.seed, crate::rng::Stream::World);
        generate_world(space, self, &mut rng)
    }
}

// Relative risk at 01:30, 04:30, ..., 22:30. Late night stays elevated while the
// pre-dawn hours are quietest; the morning and evening peaks carry the most risk.
const DIURNAL_KNOTS: [f64; 8] = [0.40, 0.15, 0.85, 0.55, 0.50, 0.70, 1.00, 0.60];

/// Day-shaped relative risk in `[0, 1]` at clock time `t`, periodic over 24 h.
pub fn diurnal_profile(t: f64) -> f64 {
    let step = DAY_HOURS / DIURNAL_KNOTS.len() as f64;
    let pos = (t - 0.5 * step).rem_euclid(DAY_HOURS) / step;
    let i = pos.floor() as usize % DIURNAL_KNOTS.len();
    let j = (i + 1) % DIURNAL_KNOTS.len();
    let frac = pos - pos.floor();
    DIURNAL_KNOTS[i] * (1.0 - frac) + DIURNAL_KNOTS[j] * frac
}

/// Draws a synthetic world: per-cluster log-uniform multiplier times a diurnal temporal
/// term, with independent lognormal noise per cell, clamped to `[floor, ceiling]`.
pub fn generate_world<R: Rng + ?Sized>(
    space: &EnvironmentSpace,
    config: &WorldConfig,
    rng: &mut R,
) -> Result<RiskTable> {
    config.validate()?;
    let (lo, hi) = config.cluster_spread;
    let (log_lo, log_hi) = (lo.ln(), hi.ln());
    let multipliers: Vec<f64> = (0..space.cluster_count())
        .map(|_| if log_lo == log_hi { lo } else { rng.random_range(log_lo..log_hi).exp() })
        .collect();
    let temporal: Vec<f64> = (1..=space.group_count())
        .map(|k| config.base_risk + config.diurnal_amplitude * diurnal_profile(space.grid().midpoint(k)))
        .collect();
    let noise = LogNormal::new(0.0, config.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut values = Vec::with_capacity(space.cardinality());
    for c in &multipliers {
        for t in &temporal {
            let eps = if config.noise_sigma == 0.0 { 1.0 } else { noise.sample(rng) };
            values.push((c * t * eps).clamp(config.floor, config.ceiling));
        }
    }
    RiskTable::from_values(space.clone(), values)
}

/// How a deployment reveals the risk of its cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservationMode {
    /// The true probability itself.
    #[default]
    Exact,
    /// Fraction of `samples` independent encounters that turn out risky.
    MonteCarlo { samples: u64 },
}

impl ObservationMode {
    pub fn validate(&self) -> Result<()> {
        match self {
            ObservationMode::MonteCarlo { samples: 0 } => {
                Err(Error::InvalidConfig("Monte Carlo observation needs at least one sample".into()))
            }
            _ => Ok(()),
        }
    }
}

pub fn observe<R: Rng + ?Sized>(table: &RiskTable, env: Environment, mode: ObservationMode, rng: &mut R) -> f64 {
    let p = table.get(env);
    match mode {
        ObservationMode::Exact => p,
        ObservationMode::MonteCarlo { samples } => {
            let risky = Binomial::new(samples, p).expect("risk table values are probabilities").sample(rng);
            risky as f64 / samples as f64
        }
    }
}
