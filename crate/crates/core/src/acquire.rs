//! Choosing the next deployment: learning gain, confidence weight and the safe region.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, EnvironmentSpace};
use crate::error::{Error, Result};
use crate::fit::DeploymentHistory;
use crate::surrogate::IntensityModel;

pub const DEFAULT_XI: f64 = 0.02;
pub const DEFAULT_TAU: f64 = 7.5e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquireConfig {
    /// Risk tolerance on the blended score.
    pub xi: f64,
    /// Steepness of the confidence weight, `alpha = exp(-kappa * z(n))`.
    pub kappa: f64,
    pub tie_seed: u64,
}

impl Default for AcquireConfig {
    fn default() -> Self {
        Self { xi: DEFAULT_XI, kappa: 1.0 / DEFAULT_TAU, tie_seed: 0 }
    }
}

impl AcquireConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.xi <= 1.0) || !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidConfig(format!("acquire config out of range: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub environment: Environment,
    pub gain: f64,
    pub alpha_used: f64,
    pub feasible_count: usize,
    /// Set when no cell was feasible and the lowest-score cell was taken instead.
    pub fallback: bool,
    /// Clamped prediction at the chosen cell.
    pub predicted: f64,
    /// Blended score `alpha * predicted + (1 - alpha) * z(n)` at the chosen cell.
    pub score: f64,
}

/// Confidence weight: `exp(-kappa * z(n))`, never below the previous weight.
pub fn alpha_of(avg_uncertainty: f64, prev_alpha: Option<f64>, config: &AcquireConfig) -> f64 {
    let fresh = (-config.kappa * avg_uncertainty.max(0.0)).exp();
    match prev_alpha {
        Some(prev) => prev.max(fresh),
        None => fresh,
    }
}

/// Absolute estimation error at an observed cell, otherwise the change between the two
/// latest fitted models.
pub fn learning_gain(
    env: Environment,
    history: &DeploymentHistory,
    model_now: &IntensityModel,
    model_prev: &IntensityModel,
) -> f64 {
    let now = model_now.predict(env);
    match history.latest(env) {
        Some(observed) => (observed - now).abs(),
        None => (now - model_prev.predict(env)).abs(),
    }
}

#[inline]
pub fn blended_score(predicted: f64, alpha: f64, avg_uncertainty: f64) -> f64 {
    alpha * predicted + (1.0 - alpha) * avg_uncertainty
}

pub fn feasible_set(
    space: &EnvironmentSpace,
    model: &IntensityModel,
    alpha: f64,
    avg_uncertainty: f64,
    config: &AcquireConfig,
) -> Vec<Environment> {
    space
        .enumerate()
        .into_iter()
        .filter(|&e| blended_score(model.predict(e), alpha, avg_uncertainty) <= config.xi)
        .collect()
}

fn pick<R: Rng + ?Sized>(candidates: &[usize], rng: &mut R) -> usize {
    if candidates.len() == 1 {
        candidates[0]
    } else {
        candidates[rng.random_range(0..candidates.len())]
    }
}

/// Selection from precomputed per-cell predictions and gains (row-major).
pub fn select_by_scores<R: Rng + ?Sized>(
    space: &EnvironmentSpace,
    predictions: &[f64],
    gains: &[f64],
    alpha: f64,
    avg_uncertainty: f64,
    xi: f64,
    rng: &mut R,
) -> Selection {
    let scores: Vec<f64> = predictions.iter().map(|&p| blended_score(p, alpha, avg_uncertainty)).collect();
    let feasible: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] <= xi).collect();
    let (index, fallback) = if feasible.is_empty() {
        let best = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let ties: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] == best).collect();
        (pick(&ties, rng), true)
    } else {
        let best = feasible.iter().map(|&i| gains[i]).fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = feasible.iter().copied().filter(|&i| gains[i] == best).collect();
        (pick(&ties, rng), false)
    };
    Selection {
        environment: space.environment_at(index),
        gain: gains[index],
        alpha_used: alpha,
        feasible_count: feasible.len(),
        fallback,
        predicted: predictions[index],
        score: scores[index],
    }
}

/// Feasible cell with the largest learning gain; ties are broken uniformly with `rng`.
/// When nothing is feasible the cell with the lowest blended score is returned and
/// flagged as a fallback.
#[allow(clippy::too_many_arguments)]
pub fn select_next<R: Rng + ?Sized>(
    space: &EnvironmentSpace,
    history: &DeploymentHistory,
    model_now: &IntensityModel,
    model_prev: &IntensityModel,
    alpha: f64,
    avg_uncertainty: f64,
    config: &AcquireConfig,
    rng: &mut R,
) -> Selection {
    let cells = space.enumerate();
    let predictions: Vec<f64> = cells.iter().map(|&e| model_now.predict(e)).collect();
    let gains: Vec<f64> = cells.iter().map(|&e| learning_gain(e, history, model_now, model_prev)).collect();
    select_by_scores(space, &predictions, &gains, alpha, avg_uncertainty, config.xi, rng)
}
