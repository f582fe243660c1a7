//! The discrete deployment space: route clusters crossed with time-of-day groups.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hours in the daily cycle.
pub const DAY_HOURS: f64 = 24.0;

/// Partition of the day into half-open groups `[t_{k-1}, t_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    boundaries: Vec<f64>,
}

impl TimeGrid {
    /// Builds a grid from `m2 + 1` strictly increasing boundaries running from 0 to 24.
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 boundaries, got {}",
                boundaries.len()
            )));
        }
        if boundaries[0] != 0.0 || boundaries[boundaries.len() - 1] != DAY_HOURS {
            return Err(Error::InvalidGrid(format!(
                "boundaries must start at 0 and end at 24, got {:?}",
                boundaries
            )));
        }
        if boundaries.iter().any(|b| !b.is_finite()) || boundaries.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "boundaries must be finite and strictly increasing, got {:?}",
                boundaries
            )));
        }
        Ok(Self { boundaries })
    }

    /// `m2` equal-width groups starting at midnight.
    pub fn uniform(group_count: usize) -> Result<Self> {
        if group_count == 0 {
            return Err(Error::InvalidGrid("group count must be positive".into()));
        }
        let width = DAY_HOURS / group_count as f64;
        let mut boundaries: Vec<f64> = (0..group_count).map(|k| k as f64 * width).collect();
        boundaries.push(DAY_HOURS);
        Self::new(boundaries)
    }

    pub fn group_count(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Width in hours of group `k` (1-based).
    pub fn width(&self, k: usize) -> f64 {
        self.boundaries[k] - self.boundaries[k - 1]
    }

    pub fn widths(&self) -> Vec<f64> {
        self.boundaries.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Left boundary of group `k` (1-based).
    pub fn start(&self, k: usize) -> f64 {
        self.boundaries[k - 1]
    }

    /// Midpoint of group `k` (1-based).
    pub fn midpoint(&self, k: usize) -> f64 {
        0.5 * (self.boundaries[k - 1] + self.boundaries[k])
    }

    /// The 1-based group containing clock time `t`.
    pub fn time_group_of(&self, t: f64) -> Result<usize> {
        if !(0.0..DAY_HOURS).contains(&t) {
            return Err(Error::TimeOutOfRange(t));
        }
        // First boundary strictly greater than t closes t's group.
        let k = self.boundaries.partition_point(|&b| b <= t);
        Ok(k)
    }
}

impl Default for TimeGrid {
    /// Eight 3-hour groups.
    fn default() -> Self {
        Self::uniform(8).expect("eight groups is a valid grid")
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;

    fn try_from(boundaries: Vec<f64>) -> Result<Self> {
        Self::new(boundaries)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(grid: TimeGrid) -> Self {
        grid.boundaries
    }
}

/// A deployment cell: route cluster `e1` in `1..=m1`, time group `e2` in `1..=m2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Environment {
    pub e1: usize,
    pub e2: usize,
}

impl Environment {
    pub const fn new(e1: usize, e2: usize) -> Self {
        Self { e1, e2 }
    }
}

impl std::fmt::Display for Environment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.e1, self.e2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpace {
    cluster_count: usize,
    grid: TimeGrid,
}

impl EnvironmentSpace {
    pub fn new(cluster_count: usize, grid: TimeGrid) -> Result<Self> {
        if cluster_count == 0 {
            return Err(Error::InvalidSpace("cluster count must be positive".into()));
        }
        Ok(Self { cluster_count, grid })
    }

    /// `m1` clusters by `m2` equal time groups.
    pub fn uniform(cluster_count: usize, group_count: usize) -> Result<Self> {
        Self::new(cluster_count, TimeGrid::uniform(group_count)?)
    }

    pub fn cluster_count(&self) -> usize {
        self.cluster_count
    }

    pub fn group_count(&self) -> usize {
        self.grid.group_count()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `m1 * m2`.
    pub fn cardinality(&self) -> usize {
        self.cluster_count * self.group_count()
    }

    pub fn contains(&self, env: Environment) -> bool {
        (1..=self.cluster_count).contains(&env.e1) && (1..=self.group_count()).contains(&env.e2)
    }

    pub fn check(&self, env: Environment) -> Result<()> {
        if self.contains(env) {
            Ok(())
        } else {
            Err(Error::EnvironmentOutOfRange {
                e1: env.e1,
                e2: env.e2,
                m1: self.cluster_count,
                m2: self.group_count(),
            })
        }
    }

    /// Row-major position of `env`, cluster outer and time group inner.
    #[inline]
    pub fn index_of(&self, env: Environment) -> usize {
        (env.e1 - 1) * self.group_count() + (env.e2 - 1)
    }

    #[inline]
    pub fn environment_at(&self, index: usize) -> Environment {
        let m2 = self.group_count();
        Environment::new(index / m2 + 1, index % m2 + 1)
    }

    /// Every cell in row-major order.
    pub fn enumerate(&self) -> Vec<Environment> {
        (0..self.cardinality()).map(|i| self.environment_at(i)).collect()
    }
}

impl Default for EnvironmentSpace {
    /// 16 route clusters by eight 3-hour groups.
    fn default() -> Self {
        Self::new(16, TimeGrid::default()).expect("default space is valid")
    }
}

pub fn enumerate_environments(space: &EnvironmentSpace) -> Vec<Environment> {
    space.enumerate()
}

pub fn time_group_of(t: f64, grid: &TimeGrid) -> Result<usize> {
    grid.time_group_of(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn singleton_space() {
        let space = EnvironmentSpace::uniform(1, 1).unwrap();
        assert_eq!(enumerate_environments(&space), vec![Environment::new(1, 1)]);
    }

    #[test]
    fn two_by_two_row_major() {
        let space = EnvironmentSpace::uniform(2, 2).unwrap();
        let cells: Vec<_> = space.enumerate().iter().map(|e| (e.e1, e.e2)).collect();
        assert_eq!(cells, vec![(1, 1), (1, 2), (2, 1), (2, 2)]);
    }

    #[test]
    fn default_space_has_128_cells() {
        let space = EnvironmentSpace::default();
        let cells = space.enumerate();
        assert_eq!(cells.len(), 128);
        let distinct: HashSet<_> = cells.iter().copied().collect();
        assert_eq!(distinct.len(), 128);
        for (i, env) in cells.iter().enumerate() {
            assert_eq!(space.index_of(*env), i);
        }
    }

    #[test]
    fn time_groups_on_equal_grid() {
        let grid = TimeGrid::default();
        assert_eq!(grid.time_group_of(0.0).unwrap(), 1);
        assert_eq!(grid.time_group_of(3.0).unwrap(), 2);
        assert_eq!(grid.time_group_of(2.999_999).unwrap(), 1);
        assert_eq!(grid.time_group_of(23.99).unwrap(), 8);
    }

    #[test]
    fn time_out_of_range_rejected() {
        let grid = TimeGrid::default();
        assert!(matches!(grid.time_group_of(24.0), Err(Error::TimeOutOfRange(_))));
        assert!(matches!(grid.time_group_of(-0.1), Err(Error::TimeOutOfRange(_))));
        assert!(grid.time_group_of(f64::NAN).is_err());
    }

    #[test]
    fn every_time_in_exactly_one_group() {
        let grid = TimeGrid::new(vec![0.0, 2.5, 7.0, 7.5, 16.0, 24.0]).unwrap();
        let mut t = 0.0;
        while t < DAY_HOURS {
            let hits: Vec<usize> = (1..=grid.group_count())
                .filter(|&k| grid.start(k) <= t && t < grid.boundaries()[k])
                .collect();
            assert_eq!(hits.len(), 1, "t = {t}");
            assert_eq!(grid.time_group_of(t).unwrap(), hits[0]);
            t += 0.01;
        }
    }

    #[test]
    fn invalid_grids() {
        assert!(TimeGrid::new(vec![0.0]).is_err());
        assert!(TimeGrid::new(vec![1.0, 24.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 12.0, 12.0, 24.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 23.0]).is_err());
        assert!(TimeGrid::uniform(0).is_err());
        assert!(EnvironmentSpace::uniform(0, 8).is_err());
    }

    #[test]
    fn grid_serializes_as_boundary_list() {
        let grid = TimeGrid::uniform(4).unwrap();
        let json = serde_json::to_string(&grid).unwrap();
        assert_eq!(json, "[0.0,6.0,12.0,18.0,24.0]");
        let back: TimeGrid = serde_json::from_str(&json).unwrap();
        assert_eq!(back, grid);
        assert!(serde_json::from_str::<TimeGrid>("[0.0,30.0]").is_err());
    }
}
