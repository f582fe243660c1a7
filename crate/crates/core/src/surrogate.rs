//! Piecewise-constant-intensity surrogate risk model.
//!
//! Risk at cell `(c, k)` is `theta1[c] * (theta2_0 + Lambda(start of group k))`, where
//! `Lambda` integrates a piecewise-constant intensity over the day. Only the first `m2 - 1`
//! intensities are free; the last one is fixed so that `Lambda(24) = 0`, which makes the
//! cumulative term periodic with a one-day period.

use serde::{Deserialize, Serialize};

use crate::env::{Environment, EnvironmentSpace, TimeGrid, DAY_HOURS};
use crate::error::{Error, Result};
use crate::world::RiskTable;

/// Surrogate parameters: `m1` spatial multipliers, a base risk level and `m2 - 1` free
/// intensities (probability per hour).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub theta1: Vec<f64>,
    pub theta2_0: f64,
    pub lambdas: Vec<f64>,
}

impl Theta {
    pub fn new(theta1: Vec<f64>, theta2_0: f64, lambdas: Vec<f64>) -> Self {
        Self { theta1, theta2_0, lambdas }
    }

    /// Flat model: unit multipliers, zero intensities, base risk `base`.
    pub fn flat(cluster_count: usize, group_count: usize, base: f64) -> Self {
        Self {
            theta1: vec![1.0; cluster_count],
            theta2_0: base,
            lambdas: vec![0.0; group_count.saturating_sub(1)],
        }
    }

    pub fn cluster_count(&self) -> usize {
        self.theta1.len()
    }

    pub fn group_count(&self) -> usize {
        self.lambdas.len() + 1
    }

    /// Number of free parameters, `m1 + m2`.
    pub fn param_count(&self) -> usize {
        self.theta1.len() + 1 + self.lambdas.len()
    }

    /// Temporal block as one vector `[theta2_0, lambda_1, ..., lambda_{m2-1}]`.
    pub fn temporal(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.lambdas.len() + 1);
        x.push(self.theta2_0);
        x.extend_from_slice(&self.lambdas);
        x
    }

    pub fn set_temporal(&mut self, x: &[f64]) {
        self.theta2_0 = x[0];
        self.lambdas.copy_from_slice(&x[1..]);
    }

    pub fn check_dimensions(&self, space: &EnvironmentSpace) -> Result<()> {
        if self.theta1.len() != space.cluster_count() || self.group_count() != space.group_count() {
            return Err(Error::DimensionMismatch(format!(
                "theta is {}x{}, space is {}x{}",
                self.theta1.len(),
                self.group_count(),
                space.cluster_count(),
                space.group_count()
            )));
        }
        Ok(())
    }
}

/// The last group's intensity that closes the daily cycle.
pub fn closure_lambda(lambdas: &[f64], grid: &TimeGrid) -> f64 {
    let m2 = grid.group_count();
    debug_assert_eq!(lambdas.len() + 1, m2);
    let area: f64 = lambdas.iter().enumerate().map(|(j, l)| l * grid.width(j + 1)).sum();
    -area / grid.width(m2)
}

/// A `Theta` bound to a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityModel {
    theta: Theta,
    grid: TimeGrid,
    // Lambda at the left boundary of each group.
    offsets: Vec<f64>,
}

impl IntensityModel {
    pub fn new(theta: Theta, grid: TimeGrid) -> Result<Self> {
        if theta.lambdas.len() + 1 != grid.group_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} free intensities for {} time groups",
                theta.lambdas.len(),
                grid.group_count()
            )));
        }
        if theta.theta1.is_empty() {
            return Err(Error::DimensionMismatch("theta1 is empty".into()));
        }
        if let Some(bad) = theta.theta1.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidConfig(format!("spatial multiplier {bad} is not a finite nonnegative number")));
        }
        let mut offsets = Vec::with_capacity(grid.group_count());
        let mut acc = 0.0;
        offsets.push(acc);
        for (j, l) in theta.lambdas.iter().enumerate() {
            acc += l * grid.width(j + 1);
            offsets.push(acc);
        }
        Ok(Self { theta, grid, offsets })
    }

    pub fn theta(&self) -> &Theta {
        &self.theta
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn into_theta(self) -> Theta {
        self.theta
    }

    pub fn closure_lambda(&self) -> f64 {
        closure_lambda(&self.theta.lambdas, &self.grid)
    }

    /// All `m2` intensities, the closure included.
    pub fn intensities(&self) -> Vec<f64> {
        let mut all = self.theta.lambdas.clone();
        all.push(self.closure_lambda());
        all
    }

    /// `Lambda(t)`, the integral of the intensity from midnight to `t`.
    pub fn cumulative_intensity(&self, t: f64) -> Result<f64> {
        if !(0.0..=DAY_HOURS).contains(&t) {
            return Err(Error::TimeOutOfRange(t));
        }
        let m2 = self.grid.group_count();
        if t == DAY_HOURS {
            return Ok(self.offsets[m2 - 1] + self.closure_lambda() * self.grid.width(m2));
        }
        let k = self.grid.time_group_of(t)?;
        let lambda = if k == m2 { self.closure_lambda() } else { self.theta.lambdas[k - 1] };
        Ok(self.offsets[k - 1] + lambda * (t - self.grid.start(k)))
    }

    /// `Lambda` at the left boundary of group `e2`.
    pub fn group_offset(&self, e2: usize) -> f64 {
        self.offsets[e2 - 1]
    }

    /// Prediction before clamping to `[0, 1]`.
    #[inline]
    pub fn predict_raw(&self, env: Environment) -> f64 {
        self.theta.theta1[env.e1 - 1] * (self.theta.theta2_0 + self.offsets[env.e2 - 1])
    }

    #[inline]
    pub fn predict(&self, env: Environment) -> f64 {
        self.predict_raw(env).clamp(0.0, 1.0)
    }

    /// Clamped predictions for every cell in row-major order.
    pub fn predict_vec(&self, space: &EnvironmentSpace) -> Vec<f64> {
        (0..space.cardinality()).map(|i| self.predict(space.environment_at(i))).collect()
    }

    pub fn predict_all(&self, space: &EnvironmentSpace) -> Result<RiskTable> {
        self.theta.check_dimensions(space)?;
        RiskTable::from_values(space.clone(), self.predict_vec(space))
    }
}
