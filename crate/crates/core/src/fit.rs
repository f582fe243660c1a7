//! Least-squares fit of the surrogate to a deployment history.
//!
//! The surrogate is bilinear in the spatial multipliers and the temporal block
//! `[theta2_0, lambda_1..lambda_{m2-1}]`, so the fit alternates between two exact
//! least-squares updates. Each update can only lower the residual, and the scale
//! ambiguity between the blocks is pinned by normalizing `mean(theta1) = 1` after every
//! round.
//!
//! Observations are pooled per cell (count, mean, within-cell sum of squares), which
//! gives the same residual as summing over raw entries at `O(cells)` cost per round.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, EnvironmentSpace};
use crate::error::{Error, Result};
use crate::rng::{self, SimRng, Stream};
use crate::surrogate::Theta;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CellStats {
    pub count: u32,
    pub mean: f64,
    /// Sum of squared deviations from `mean`.
    pub within_ss: f64,
    pub last: f64,
}

/// Ordered `(environment, observed risk)` pairs plus per-cell running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentHistory {
    space: EnvironmentSpace,
    entries: Vec<(Environment, f64)>,
    cells: Vec<CellStats>,
}

impl DeploymentHistory {
    pub fn new(space: EnvironmentSpace) -> Self {
        let cells = vec![CellStats::default(); space.cardinality()];
        Self { space, entries: Vec::new(), cells }
    }

    pub fn from_entries(space: EnvironmentSpace, entries: impl IntoIterator<Item = (Environment, f64)>) -> Result<Self> {
        let mut h = Self::new(space);
        for (env, v) in entries {
            h.push(env, v)?;
        }
        Ok(h)
    }

    pub fn push(&mut self, env: Environment, value: f64) -> Result<()> {
        self.space.check(env)?;
        if !value.is_finite() {
            return Err(Error::NonFiniteObservation { index: self.entries.len(), value });
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidConfig(format!("observed risk {value} is not a probability")));
        }
        let cell = &mut self.cells[self.space.index_of(env)];
        // Welford update; repeated identical values leave within_ss at exactly zero.
        cell.count += 1;
        let delta = value - cell.mean;
        cell.mean += delta / cell.count as f64;
        cell.within_ss += delta * (value - cell.mean);
        cell.last = value;
        self.entries.push((env, value));
        Ok(())
    }

    pub fn space(&self) -> &EnvironmentSpace {
        &self.space
    }

    pub fn entries(&self) -> &[(Environment, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn cell(&self, env: Environment) -> &CellStats {
        &self.cells[self.space.index_of(env)]
    }

    pub fn cells(&self) -> &[CellStats] {
        &self.cells
    }

    /// Most recent observation of `env`, if it was ever deployed.
    pub fn latest(&self, env: Environment) -> Option<f64> {
        let c = self.cell(env);
        (c.count > 0).then_some(c.last)
    }

    pub fn mean_observed(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v).sum::<f64>() / self.entries.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub max_als_rounds: usize,
    /// Stop when the relative drop of the residual norm over a round is at most this.
    pub als_tolerance: f64,
    /// Random restarts in addition to the warm and flat starts.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { max_als_rounds: 200, als_tolerance: 1e-10, restarts: 3, seed: 0 }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_als_rounds == 0 || self.als_tolerance.is_nan() || self.als_tolerance <= 0.0 {
            return Err(Error::InvalidConfig(format!("fit config out of range: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta: Theta,
    /// Residual norm `z^(n)`.
    pub residual_z: f64,
    /// `z(n) = z^(n) / n`.
    pub avg_uncertainty: f64,
    pub als_rounds: usize,
    pub converged: bool,
    /// Which start won: 0 is the warm start (or the flat start without one).
    #[serde(skip)]
    pub start_index: usize,
    /// Residual norm after initialization and after each round of the winning start.
    #[serde(skip)]
    pub trace: Vec<f64>,
    /// Clusters whose temporal term vanished on every observed cell.
    #[serde(skip)]
    pub degenerate_clusters: Vec<usize>,
}

pub fn avg_uncertainty(residual_z: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyHistory);
    }
    Ok(residual_z / n as f64)
}

/// Flat start: unit multipliers, zero intensities, base risk at the mean observation.
pub fn initial_theta(history: &DeploymentHistory) -> Theta {
    let space = history.space();
    let base = if history.is_empty() { 0.0 } else { history.mean_observed() };
    Theta::flat(space.cluster_count(), space.group_count(), base)
}

/// Pooled per-cell data for the observed cells only.
struct Problem {
    m1: usize,
    m2: usize,
    cluster: Vec<usize>,
    group: Vec<usize>,
    weight: Vec<f64>,
    mean: Vec<f64>,
    within_ss: f64,
    // Maps the temporal block to per-group values: v = design * x.
    design: DMatrix<f64>,
    widths: Vec<f64>,
}

impl Problem {
    fn new(history: &DeploymentHistory) -> Self {
        let space = history.space();
        let (m1, m2) = (space.cluster_count(), space.group_count());
        let mut p = Problem {
            m1,
            m2,
            cluster: Vec::new(),
            group: Vec::new(),
            weight: Vec::new(),
            mean: Vec::new(),
            within_ss: 0.0,
            design: DMatrix::zeros(m2, m2),
            widths: space.grid().widths(),
        };
        for (i, c) in history.cells().iter().enumerate() {
            if c.count == 0 {
                continue;
            }
            let env = space.environment_at(i);
            p.cluster.push(env.e1 - 1);
            p.group.push(env.e2 - 1);
            p.weight.push(c.count as f64);
            p.mean.push(c.mean);
            p.within_ss += c.within_ss;
        }
        for k in 0..m2 {
            p.design[(k, 0)] = 1.0;
            for j in 1..=k {
                p.design[(k, j)] = p.widths[j - 1];
            }
        }
        p
    }

    fn group_values(&self, x: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.m2);
        let mut acc = x[0];
        v.push(acc);
        for (xj, w) in x[1..self.m2].iter().zip(&self.widths) {
            acc += xj * w;
            v.push(acc);
        }
        v
    }

    fn sum_squares(&self, theta1: &[f64], v: &[f64]) -> f64 {
        let mut ss = self.within_ss;
        for i in 0..self.weight.len() {
            let r = self.mean[i] - theta1[self.cluster[i]] * v[self.group[i]];
            ss += self.weight[i] * r * r;
        }
        ss
    }

    /// Exact least squares over the temporal block with `theta1` fixed. Directions the
    /// data cannot identify keep their values from `current` (minimum-norm change).
    fn temporal(&self, theta1: &[f64], current: &[f64]) -> Vec<f64> {
        let mut gram = vec![0.0; self.m2];
        let mut rhs = vec![0.0; self.m2];
        for i in 0..self.weight.len() {
            let t = theta1[self.cluster[i]];
            let k = self.group[i];
            gram[k] += self.weight[i] * t * t;
            rhs[k] += self.weight[i] * t * self.mean[i];
        }
        if gram.iter().all(|&g| g > 0.0) {
            // Full rank: per-group values are independent 1-d solves, then invert the
            // cumulative map.
            let v: Vec<f64> = rhs.iter().zip(&gram).map(|(r, g)| r / g).collect();
            let mut x = Vec::with_capacity(self.m2);
            x.push(v[0]);
            for j in 1..self.m2 {
                x.push((v[j] - v[j - 1]) / self.widths[j - 1]);
            }
            return x;
        }
        self.temporal_pinv(&gram, &rhs, current)
    }

    fn temporal_pinv(&self, gram: &[f64], rhs: &[f64], current: &[f64]) -> Vec<f64> {
        let a = &self.design;
        let normal = a.transpose() * DMatrix::from_diagonal(&DVector::from_column_slice(gram)) * a;
        let b = a.transpose() * DVector::from_column_slice(rhs);
        let x0 = DVector::from_column_slice(current);
        let r = b - &normal * &x0;
        let eig = SymmetricEigen::new(normal);
        let max_ev = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let cutoff = max_ev * 1e-12;
        let mut delta = DVector::zeros(self.m2);
        for (i, &ev) in eig.eigenvalues.iter().enumerate() {
            if ev > cutoff && ev > 0.0 {
                let u = eig.eigenvectors.column(i);
                delta += u * (u.dot(&r) / ev);
            }
        }
        (x0 + delta).iter().copied().collect()
    }

    /// Per-cluster 1-d least squares projected onto `theta1 >= 0`. Returns the clusters
    /// left unchanged because their temporal term was zero on every observed cell.
    fn spatial(&self, v: &[f64], theta1: &mut [f64]) -> Vec<usize> {
        let mut num = vec![0.0; self.m1];
        let mut den = vec![0.0; self.m1];
        let mut seen = vec![false; self.m1];
        for i in 0..self.weight.len() {
            let c = self.cluster[i];
            let vk = v[self.group[i]];
            num[c] += self.weight[i] * self.mean[i] * vk;
            den[c] += self.weight[i] * vk * vk;
            seen[c] = true;
        }
        let mut degenerate = Vec::new();
        for c in 0..self.m1 {
            if !seen[c] {
                continue;
            }
            if den[c] > 0.0 {
                theta1[c] = (num[c] / den[c]).max(0.0);
            } else {
                degenerate.push(c + 1);
            }
        }
        degenerate
    }
}

struct Run {
    theta1: Vec<f64>,
    x: Vec<f64>,
    ss: f64,
    rounds: usize,
    converged: bool,
    trace: Vec<f64>,
    degenerate: Vec<usize>,
}

fn normalize(theta1: &mut [f64], x: &mut [f64]) {
    let mean = theta1.iter().sum::<f64>() / theta1.len() as f64;
    if mean > 0.0 && mean.is_finite() {
        theta1.iter_mut().for_each(|t| *t /= mean);
        x.iter_mut().for_each(|t| *t *= mean);
    }
}

fn als(problem: &Problem, mut theta1: Vec<f64>, mut x: Vec<f64>, config: &FitConfig) -> Run {
    normalize(&mut theta1, &mut x);
    let mut ss = problem.sum_squares(&theta1, &problem.group_values(&x));
    let mut trace = vec![ss.sqrt()];
    let mut converged = false;
    let mut rounds = 0;
    let mut degenerate = Vec::new();
    // Residuals this far below the data scale are round-off.
    let scale: f64 = problem.weight.iter().zip(&problem.mean).map(|(w, m)| w * m * m).sum::<f64>() + problem.within_ss;
    let floor = scale * 1e-28;
    while rounds < config.max_als_rounds {
        rounds += 1;
        x = problem.temporal(&theta1, &x);
        let v = problem.group_values(&x);
        degenerate = problem.spatial(&v, &mut theta1);
        normalize(&mut theta1, &mut x);
        let next = problem.sum_squares(&theta1, &problem.group_values(&x));
        let (prev_z, z) = (ss.sqrt(), next.sqrt());
        ss = next;
        trace.push(z);
        if prev_z - z <= config.als_tolerance * prev_z || ss <= floor {
            converged = true;
            break;
        }
    }
    Run { theta1, x, ss, rounds, converged, trace, degenerate }
}

/// Fits the surrogate to `history`, minimizing the L2 norm of the residual vector.
///
/// Starts from `warm_start` when given, from the flat model, and from
/// `config.restarts` random log-uniform multipliers; the lowest residual wins with ties
/// going to the earlier start.
pub fn fit(
    history: &DeploymentHistory,
    space: &EnvironmentSpace,
    config: &FitConfig,
    warm_start: Option<&Theta>,
) -> Result<FitResult> {
    config.validate()?;
    if history.is_empty() {
        return Err(Error::EmptyHistory);
    }
    if history.space() != space {
        return Err(Error::DimensionMismatch("history was recorded on a different space".into()));
    }
    if let Some((index, &(_, value))) = history.entries().iter().enumerate().find(|(_, (_, v))| !v.is_finite()) {
        return Err(Error::NonFiniteObservation { index, value });
    }
    if let Some(w) = warm_start {
        w.check_dimensions(space)?;
    }
    let problem = Problem::new(history);
    let flat = initial_theta(history);

    let mut starts: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(config.restarts + 2);
    if let Some(w) = warm_start {
        starts.push((w.theta1.clone(), w.temporal()));
    }
    starts.push((flat.theta1.clone(), flat.temporal()));
    if config.restarts > 0 {
        let mut rng: SimRng = rng::stream(rng::derive(config.seed, history.len() as u64), Stream::Restarts);
        let (lo, hi) = (0.25f64.ln(), 4.0f64.ln());
        for _ in 0..config.restarts {
            let theta1 = (0..problem.m1).map(|_| rng.random_range(lo..hi).exp()).collect();
            starts.push((theta1, flat.temporal()));
        }
    }

    let mut best: Option<(usize, Run)> = None;
    for (i, (theta1, x)) in starts.into_iter().enumerate() {
        let run = als(&problem, theta1, x, config);
        let better = match &best {
            None => true,
            Some((_, b)) => run.ss < b.ss,
        };
        if better {
            best = Some((i, run));
        }
    }
    let (start_index, run) = best.expect("at least one start");
    let mut theta = Theta::flat(problem.m1, problem.m2, 0.0);
    theta.theta1 = run.theta1;
    theta.set_temporal(&run.x);
    let residual_z = run.ss.max(0.0).sqrt();
    Ok(FitResult {
        theta,
        residual_z,
        avg_uncertainty: avg_uncertainty(residual_z, history.len())?,
        als_rounds: run.rounds,
        converged: run.converged,
        start_index,
        trace: run.trace,
        degenerate_clusters: run.degenerate,
    })
}

/// L2 residual norm of `theta` on `history`.
pub fn residual_norm(history: &DeploymentHistory, theta: &Theta) -> f64 {
    let problem = Problem::new(history);
    problem.sum_squares(&theta.theta1, &problem.group_values(&theta.temporal())).max(0.0).sqrt()
}

/// Least-squares temporal block `(theta2_0, lambdas)` with `theta.theta1` held fixed.
/// Unidentified directions keep the values they have in `theta`; pass a zero temporal
/// block to get the minimum-norm solution.
pub fn temporal_substep(history: &DeploymentHistory, theta: &Theta, space: &EnvironmentSpace) -> Result<(f64, Vec<f64>)> {
    theta.check_dimensions(space)?;
    let problem = Problem::new(history);
    let x = problem.temporal(&theta.theta1, &theta.temporal());
    Ok((x[0], x[1..].to_vec()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialStep {
    pub theta1: Vec<f64>,
    /// 1-based clusters left unchanged because their temporal term was zero.
    pub degenerate_clusters: Vec<usize>,
}

/// Closed-form per-cluster multipliers with the temporal block of `theta` held fixed.
/// Unobserved clusters keep their value from `theta`.
pub fn spatial_substep(history: &DeploymentHistory, theta: &Theta, space: &EnvironmentSpace) -> Result<SpatialStep> {
    theta.check_dimensions(space)?;
    let problem = Problem::new(history);
    let mut theta1 = theta.theta1.clone();
    let v = problem.group_values(&theta.temporal());
    let degenerate_clusters = problem.spatial(&v, &mut theta1);
    Ok(SpatialStep { theta1, degenerate_clusters })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::IntensityModel;
    use approx::assert_abs_diff_eq;

    fn env(e1: usize, e2: usize) -> Environment {
        Environment::new(e1, e2)
    }

    #[test]
    fn constant_data_recovers_flat_model() {
        let space = EnvironmentSpace::uniform(4, 8).unwrap();
        let entries = [(1, 1), (2, 3), (3, 8), (4, 5), (1, 6), (2, 2)].map(|(a, b)| (env(a, b), 0.004));
        let h = DeploymentHistory::from_entries(space.clone(), entries).unwrap();
        let r = fit(&h, &space, &FitConfig::default(), None).unwrap();
        assert!(r.theta.theta1.iter().all(|t| (t - 1.0).abs() < 1e-12));
        assert!(r.theta.lambdas.iter().all(|l| l.abs() < 1e-15));
        assert_abs_diff_eq!(r.theta.theta2_0, 0.004, epsilon = 1e-15);
        assert!(r.residual_z < 1e-15);
    }

    #[test]
    fn single_observation_interpolates() {
        let space = EnvironmentSpace::uniform(1, 8).unwrap();
        for e2 in [1, 5] {
            let h = DeploymentHistory::from_entries(space.clone(), [(env(1, e2), 0.005)]).unwrap();
            let r = fit(&h, &space, &FitConfig::default(), None).unwrap();
            assert_eq!(r.residual_z, 0.0);
            assert_abs_diff_eq!(r.theta.theta2_0, 0.005, epsilon = 1e-18);
        }
    }

    #[test]
    fn errors() {
        let space = EnvironmentSpace::uniform(2, 2).unwrap();
        let h = DeploymentHistory::new(space.clone());
        assert!(matches!(fit(&h, &space, &FitConfig::default(), None), Err(Error::EmptyHistory)));
        let mut h = DeploymentHistory::new(space.clone());
        assert!(matches!(h.push(env(1, 1), f64::NAN), Err(Error::NonFiniteObservation { index: 0, .. })));
        assert!(h.push(env(3, 1), 0.1).is_err());
        assert!(h.push(env(1, 1), 1.5).is_err());
        assert!(matches!(avg_uncertainty(1.0, 0), Err(Error::EmptyHistory)));
        let other = EnvironmentSpace::uniform(3, 2).unwrap();
        h.push(env(1, 1), 0.1).unwrap();
        assert!(fit(&h, &other, &FitConfig::default(), None).is_err());
    }

    #[test]
    fn avg_uncertainty_examples() {
        assert_abs_diff_eq!(avg_uncertainty(0.1, 100).unwrap(), 0.001, epsilon = 1e-18);
        assert_eq!(avg_uncertainty(0.0, 37).unwrap(), 0.0);
        assert_abs_diff_eq!(avg_uncertainty(5.94e-2, 100).unwrap(), 5.94e-4, epsilon = 1e-18);
    }

    #[test]
    fn temporal_substep_examples() {
        let space = EnvironmentSpace::uniform(2, 4).unwrap();
        let zero = Theta::flat(2, 4, 0.0);
        let all: Vec<_> = space.enumerate().into_iter().map(|e| (e, 0.003)).collect();
        let h = DeploymentHistory::from_entries(space.clone(), all).unwrap();
        let (base, lambdas) = temporal_substep(&h, &zero, &space).unwrap();
        assert_abs_diff_eq!(base, 0.003, epsilon = 1e-15);
        assert!(lambdas.iter().all(|l| l.abs() < 1e-15));

        // Groups 1 and 2 on cluster 1 differ by d: lambda_1 * 6h = d.
        let d = 0.0024;
        let h = DeploymentHistory::from_entries(space.clone(), [(env(1, 1), 0.001), (env(1, 2), 0.001 + d)]).unwrap();
        let (base, lambdas) = temporal_substep(&h, &zero, &space).unwrap();
        assert_abs_diff_eq!(base, 0.001, epsilon = 1e-15);
        assert_abs_diff_eq!(lambdas[0] * 6.0, d, epsilon = 1e-15);
        // Groups 3 and 4 are unobserved: minimum-norm leaves their intensities at zero.
        assert_abs_diff_eq!(lambdas[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lambdas[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn minimum_norm_splits_unobserved_interior_group() {
        // Group 2 of 3 unobserved: 8h * (lambda_1 + lambda_2) = 0.008 is pinned by group 3,
        // and the minimum-norm solution splits it evenly.
        let space = EnvironmentSpace::uniform(1, 3).unwrap();
        let h = DeploymentHistory::from_entries(space.clone(), [(env(1, 1), 0.002), (env(1, 3), 0.010)]).unwrap();
        let (base, lambdas) = temporal_substep(&h, &Theta::flat(1, 3, 0.0), &space).unwrap();
        assert_abs_diff_eq!(base, 0.002, epsilon = 1e-15);
        assert_abs_diff_eq!(lambdas[0], 0.0005, epsilon = 1e-15);
        assert_abs_diff_eq!(lambdas[1], 0.0005, epsilon = 1e-15);
    }

    #[test]
    fn full_rank_fast_path_matches_pseudo_inverse() {
        let space = EnvironmentSpace::uniform(3, 5).unwrap();
        let values = [0.01, 0.02, 0.005, 0.03, 0.001, 0.004, 0.006, 0.012, 0.02, 0.009, 0.0, 0.03, 0.011, 0.002, 0.004];
        let entries: Vec<_> = space.enumerate().into_iter().zip(values).collect();
        let h = DeploymentHistory::from_entries(space.clone(), entries).unwrap();
        let p = Problem::new(&h);
        let theta1 = [0.7, 1.1, 1.2];
        let mut gram = vec![0.0; 5];
        let mut rhs = vec![0.0; 5];
        for i in 0..p.weight.len() {
            let t = theta1[p.cluster[i]];
            gram[p.group[i]] += p.weight[i] * t * t;
            rhs[p.group[i]] += p.weight[i] * t * p.mean[i];
        }
        let fast = p.temporal(&theta1, &[0.0; 5]);
        let slow = p.temporal_pinv(&gram, &rhs, &[0.3, -0.1, 0.2, 0.0, 0.5]);
        for (a, b) in fast.iter().zip(&slow) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn spatial_substep_examples() {
        let space = EnvironmentSpace::uniform(3, 2).unwrap();
        let theta = Theta::new(vec![1.0, 1.0, 0.7], 0.002, vec![0.0]);
        let h = DeploymentHistory::from_entries(space.clone(), [(env(1, 1), 0.004), (env(2, 2), 0.0005)]).unwrap();
        let step = spatial_substep(&h, &theta, &space).unwrap();
        assert_abs_diff_eq!(step.theta1[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(step.theta1[1], 0.25, epsilon = 1e-15);
        assert_eq!(step.theta1[2], 0.7);

        let negative = Theta::new(vec![1.0; 3], -0.002, vec![0.0]);
        let step = spatial_substep(&h, &negative, &space).unwrap();
        assert_eq!(step.theta1[0], 0.0);

        let zero = Theta::new(vec![0.5; 3], 0.0, vec![0.0]);
        let step = spatial_substep(&h, &zero, &space).unwrap();
        assert_eq!(step.theta1, vec![0.5; 3]);
        assert_eq!(step.degenerate_clusters, vec![1, 2]);
    }

    fn exact_history(space: &EnvironmentSpace, theta: &Theta) -> DeploymentHistory {
        let model = IntensityModel::new(theta.clone(), space.grid().clone()).unwrap();
        let entries: Vec<_> = space.enumerate().into_iter().map(|e| (e, model.predict_raw(e))).collect();
        DeploymentHistory::from_entries(space.clone(), entries).unwrap()
    }

    #[test]
    fn recovers_exact_model_and_normalizes() {
        let space = EnvironmentSpace::uniform(4, 4).unwrap();
        let truth = Theta::new(vec![0.5, 2.0, 1.2, 3.0], 0.002, vec![0.0004, -0.0001, 0.0002]);
        let h = exact_history(&space, &truth);
        let r = fit(&h, &space, &FitConfig::default(), None).unwrap();
        assert!(r.residual_z <= 1e-9, "{}", r.residual_z);
        let mean = r.theta.theta1.iter().sum::<f64>() / 4.0;
        assert!((mean - 1.0).abs() <= 1e-12);
        let fitted = IntensityModel::new(r.theta.clone(), space.grid().clone()).unwrap();
        let truth_model = IntensityModel::new(truth, space.grid().clone()).unwrap();
        for e in space.enumerate() {
            assert_abs_diff_eq!(fitted.predict(e), truth_model.predict(e), epsilon = 1e-6);
        }
        assert_abs_diff_eq!(r.avg_uncertainty * 16.0, r.residual_z, epsilon = 1e-18);
    }

    #[test]
    fn residual_is_monotone_and_never_worse_than_flat() {
        let space = EnvironmentSpace::default();
        let table = crate::world::WorldConfig { seed: 9, noise_sigma: 1.0, ..Default::default() }
            .generate(&space)
            .unwrap();
        let mut r = rng::stream(9, Stream::Initialization);
        let mut h = DeploymentHistory::new(space.clone());
        for _ in 0..60 {
            let e = space.environment_at(r.random_range(0..space.cardinality()));
            h.push(e, table.get(e)).unwrap();
        }
        let res = fit(&h, &space, &FitConfig::default(), None).unwrap();
        for w in res.trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", res.trace);
        }
        let flat = residual_norm(&h, &initial_theta(&h));
        assert!(res.residual_z <= flat);
        assert_abs_diff_eq!(residual_norm(&h, &res.theta), res.residual_z, epsilon = 1e-15);
    }

    #[test]
    fn duplicates_weight_the_fit() {
        let space = EnvironmentSpace::uniform(1, 1).unwrap();
        let e = env(1, 1);
        let h = DeploymentHistory::from_entries(space.clone(), [(e, 0.01), (e, 0.01), (e, 0.04)]).unwrap();
        let r = fit(&h, &space, &FitConfig::default(), None).unwrap();
        assert_abs_diff_eq!(r.theta.theta2_0, 0.02, epsilon = 1e-15);
        // deviations -0.01, -0.01, 0.02
        assert_abs_diff_eq!(r.residual_z, (6e-4f64).sqrt(), epsilon = 1e-15);
    }
}
