//! Encounter logs to a risk table: risky-event labelling, per-route aggregation and
//! k-means clustering of routes into spatial clusters.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvironmentSpace, TimeGrid};
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::world::RiskTable;

pub const LOG_HEADER: [&str; 4] = ["route_id", "timestamp_h", "range_ft", "range_rate_ftps"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncounterRecord {
    pub route_id: String,
    /// Clock time in hours, `[0, 24)`.
    pub timestamp: f64,
    /// Distance to the encountered object in feet.
    pub range: f64,
    /// Relative velocity in feet per second; negative when closing.
    pub range_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiskyEventCriteria {
    /// Inclusive upper bound on range, feet.
    pub max_range: f64,
    /// Strict upper bound on range rate, ft/s.
    pub rate_threshold: f64,
}

impl Default for RiskyEventCriteria {
    fn default() -> Self {
        Self { max_range: 10.0, rate_threshold: 0.0 }
    }
}

impl RiskyEventCriteria {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_range > 0.0 && self.max_range.is_finite()) || !self.rate_threshold.is_finite() {
            return Err(Error::InvalidConfig(format!("risky-event criteria out of range: {self:?}")));
        }
        Ok(())
    }
}

/// A close encounter that is still closing in.
pub fn is_risky(record: &EncounterRecord, criteria: &RiskyEventCriteria) -> bool {
    record.range <= criteria.max_range && record.range_rate < criteria.rate_threshold
}

fn field(record: &csv::StringRecord, index: usize, line: u64) -> Result<f64> {
    let name = LOG_HEADER[index];
    let raw = record[index].trim();
    let value: f64 = raw
        .parse()
        .map_err(|_| Error::Parse { line, message: format!("field {name}: '{raw}' is not a number") })?;
    if !value.is_finite() {
        return Err(Error::Parse { line, message: format!("field {name}: value must be finite") });
    }
    Ok(value)
}

/// Parses an encounter log with header `route_id,timestamp_h,range_ft,range_rate_ftps`.
pub fn parse_log<R: Read>(reader: R) -> Result<Vec<EncounterRecord>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.iter().map(str::trim).ne(LOG_HEADER) {
        return Err(Error::Parse { line: 1, message: format!("expected header {}", LOG_HEADER.join(",")) });
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != LOG_HEADER.len() {
            return Err(Error::Parse { line, message: format!("expected {} fields, got {}", LOG_HEADER.len(), rec.len()) });
        }
        let route_id = rec[0].trim().to_string();
        if route_id.is_empty() {
            return Err(Error::Parse { line, message: "field route_id: empty".into() });
        }
        let timestamp = field(&rec, 1, line)?;
        if !(0.0..24.0).contains(&timestamp) {
            return Err(Error::Parse { line, message: format!("field timestamp_h: {timestamp} is outside [0, 24)") });
        }
        let range = field(&rec, 2, line)?;
        if range < 0.0 {
            return Err(Error::Parse { line, message: format!("field range_ft: {range} is negative") });
        }
        let range_rate = field(&rec, 3, line)?;
        out.push(EncounterRecord { route_id, timestamp, range, range_rate });
    }
    Ok(out)
}

pub fn load_log(path: &std::path::Path) -> Result<Vec<EncounterRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_log(std::io::BufReader::new(file))
}

/// Encounter counts of one route, per time group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteAggregate {
    pub route_id: String,
    pub totals: Vec<u64>,
    pub risky: Vec<u64>,
}

impl RouteAggregate {
    pub fn new(route_id: impl Into<String>, group_count: usize) -> Self {
        Self { route_id: route_id.into(), totals: vec![0; group_count], risky: vec![0; group_count] }
    }

    /// Empirical risk of 1-based group `k`; `None` when the group has no records.
    pub fn p_hat(&self, k: usize) -> Option<f64> {
        let total = self.totals[k - 1];
        (total > 0).then(|| self.risky[k - 1] as f64 / total as f64)
    }

    pub fn total_count(&self) -> u64 {
        self.totals.iter().sum()
    }

    pub fn risky_count(&self) -> u64 {
        self.risky.iter().sum()
    }

    pub fn overall_p_hat(&self) -> Option<f64> {
        let total = self.total_count();
        (total > 0).then(|| self.risky_count() as f64 / total as f64)
    }

    /// Adds the counts of another aggregate of the same route.
    pub fn merge(&mut self, other: &RouteAggregate) -> Result<()> {
        if other.route_id != self.route_id || other.totals.len() != self.totals.len() {
            return Err(Error::DimensionMismatch(format!("cannot merge route {} into {}", other.route_id, self.route_id)));
        }
        for k in 0..self.totals.len() {
            self.totals[k] += other.totals[k];
            self.risky[k] += other.risky[k];
        }
        Ok(())
    }
}

/// Per-route, per-group counts, ordered by route id.
pub fn aggregate(records: &[EncounterRecord], grid: &TimeGrid, criteria: &RiskyEventCriteria) -> Result<Vec<RouteAggregate>> {
    let mut routes: BTreeMap<&str, RouteAggregate> = BTreeMap::new();
    for r in records {
        let k = grid.time_group_of(r.timestamp)?;
        let agg = routes.entry(&r.route_id).or_insert_with(|| RouteAggregate::new(&r.route_id, grid.group_count()));
        agg.totals[k - 1] += 1;
        agg.risky[k - 1] += is_risky(r, criteria) as u64;
    }
    Ok(routes.into_values().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteClustering {
    /// Route id to 1-based cluster.
    pub assignment: BTreeMap<String, usize>,
    pub k: usize,
    /// Cluster centres in standardized feature space.
    pub centroids: Vec<[f64; 2]>,
    /// Within-cluster sum of squares after each assignment step.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl RouteClustering {
    pub fn cluster_of(&self, route_id: &str) -> Result<usize> {
        self.assignment.get(route_id).copied().ok_or_else(|| Error::UnassignedRoute(route_id.to_string()))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["route_id", "cluster"])?;
        for (route, cluster) in &self.assignment {
            w.write_record([route.as_str(), &cluster.to_string()])?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }
}

/// Clustering features: overall empirical risk and log10 of the encounter count,
/// each standardized to zero mean and unit variance.
pub fn route_features(aggregates: &[RouteAggregate]) -> Vec<[f64; 2]> {
    let raw: Vec<[f64; 2]> = aggregates
        .iter()
        .map(|a| [a.overall_p_hat().unwrap_or(0.0), (a.total_count().max(1) as f64).log10()])
        .collect();
    let n = raw.len() as f64;
    let mut out = raw.clone();
    for d in 0..2 {
        let mean = raw.iter().map(|p| p[d]).sum::<f64>() / n;
        let var = raw.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for (o, r) in out.iter_mut().zip(&raw) {
            o[d] = (r[d] - mean) / sd;
        }
    }
    out
}

fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn nearest(p: &[f64; 2], centroids: &[[f64; 2]]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(j, c)| (j, dist2(p, c)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn plus_plus_seeds<R: Rng + ?Sized>(points: &[[f64; 2]], k: usize, rng: &mut R) -> Vec<[f64; 2]> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    while centroids.len() < k {
        let d: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        let total: f64 = d.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = d.len() - 1;
            for (i, &di) in d.iter().enumerate() {
                if target < di {
                    chosen = i;
                    break;
                }
                target -= di;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[next]);
    }
    centroids
}

/// Labels, centroids, objective trace and convergence flag of one k-means run.
pub type KMeansOutput = (Vec<usize>, Vec<[f64; 2]>, Vec<f64>, bool);

/// Lloyd's k-means with k-means++ seeding on `points`. Returns 0-based labels,
/// centroids, the objective after every assignment step and whether it converged.
pub fn kmeans<R: Rng + ?Sized>(
    points: &[[f64; 2]],
    k: usize,
    max_iters: usize,
    rng: &mut R,
) -> Result<KMeansOutput> {
    if k == 0 || points.len() < k {
        return Err(Error::TooFewRoutes { k, routes: points.len() });
    }
    let mut centroids = plus_plus_seeds(points, k, rng);
    let mut labels = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        let mut objective = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(p, &centroids);
            changed |= labels[i] != j;
            labels[i] = j;
            objective += d;
        }
        trace.push(objective);
        if !changed {
            converged = true;
            break;
        }
        let mut sums = vec![[0.0; 2]; k];
        let mut counts = vec![0usize; k];
        for (p, &j) in points.iter().zip(&labels) {
            sums[j][0] += p[0];
            sums[j][1] += p[1];
            counts[j] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = [sums[j][0] / counts[j] as f64, sums[j][1] / counts[j] as f64];
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // Re-seed with the point farthest from its current centre.
                let far = (0..points.len())
                    .filter(|&i| labels[i] != usize::MAX)
                    .map(|i| (i, dist2(&points[i], &centroids[labels[i]])))
                    .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
                    .0;
                centroids[j] = points[far];
                counts[j] = 1;
                labels[far] = usize::MAX;
            }
        }
    }
    Ok((labels, centroids, trace, converged))
}

pub fn cluster_routes(aggregates: &[RouteAggregate], k: usize, rng: &mut SimRng, max_iters: usize) -> Result<RouteClustering> {
    if aggregates.len() < k || k == 0 {
        return Err(Error::TooFewRoutes { k, routes: aggregates.len() });
    }
    let points = route_features(aggregates);
    let (labels, centroids, objective_trace, converged) = kmeans(&points, k, max_iters, rng)?;
    let assignment = aggregates.iter().zip(&labels).map(|(a, &j)| (a.route_id.clone(), j + 1)).collect();
    Ok(RouteClustering { assignment, k, centroids, objective_trace, converged })
}

/// Pools counts over the routes of each cluster; cells without any encounter take the
/// global pooled rate.
pub fn build_risk_table(aggregates: &[RouteAggregate], clustering: &RouteClustering, grid: &TimeGrid) -> Result<RiskTable> {
    let space = EnvironmentSpace::new(clustering.k, grid.clone())?;
    let m2 = grid.group_count();
    let mut totals = vec![0u64; space.cardinality()];
    let mut risky = vec![0u64; space.cardinality()];
    for a in aggregates {
        if a.totals.len() != m2 {
            return Err(Error::DimensionMismatch(format!("route {} has {} groups, grid has {m2}", a.route_id, a.totals.len())));
        }
        let c = clustering.cluster_of(&a.route_id)?;
        for k in 0..m2 {
            totals[(c - 1) * m2 + k] += a.totals[k];
            risky[(c - 1) * m2 + k] += a.risky[k];
        }
    }
    let all: u64 = totals.iter().sum();
    if all == 0 {
        return Err(Error::InvalidConfig("no encounter records to build a risk table from".into()));
    }
    let global = risky.iter().sum::<u64>() as f64 / all as f64;
    let values = (0..space.cardinality())
        .map(|i| {
            if totals[i] > 0 {
                risky[i] as f64 / totals[i] as f64
            } else {
                log::warn!("cell {} has no encounters; using the global rate {global}", space.environment_at(i));
                global
            }
        })
        .collect();
    RiskTable::from_values(space, values)
}
