//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use safedeploy::ingest::RouteAggregate;
use safedeploy::{DeploymentHistory, Environment, EnvironmentSpace};

/// Brute-force least squares for the bilinear model `y[c][k] ~ t[c] * v[k]` on a fully
/// observed table, with `mean(t) = 1` and `t >= 0`.
///
/// For fixed `t` the best `v` is a per-column 1-d regression, so the search only runs
/// over `t`: a dense grid over the normalized box, then a pattern search along
/// mean-preserving directions.
pub struct Oracle {
    pub theta1: Vec<f64>,
    pub v: Vec<f64>,
    pub residual: f64,
}

pub fn profile(y: &[Vec<f64>], t: &[f64]) -> (f64, Vec<f64>) {
    let m2 = y[0].len();
    let tt: f64 = t.iter().map(|x| x * x).sum();
    let v: Vec<f64> = (0..m2)
        .map(|k| if tt > 0.0 { t.iter().zip(y).map(|(tc, row)| tc * row[k]).sum::<f64>() / tt } else { 0.0 })
        .collect();
    let ss = y
        .iter()
        .zip(t)
        .map(|(row, tc)| row.iter().zip(&v).map(|(yk, vk)| (yk - tc * vk).powi(2)).sum::<f64>())
        .sum();
    (ss, v)
}

fn grid_points(m1: usize, steps: usize) -> Vec<Vec<f64>> {
    // Free coordinates t[0..m1-1] on [0, m1]; the last one closes the mean.
    let h = m1 as f64 / steps as f64;
    let mut out = Vec::new();
    let mut idx = vec![0usize; m1 - 1];
    loop {
        let mut t: Vec<f64> = idx.iter().map(|&i| i as f64 * h).collect();
        let last = m1 as f64 - t.iter().sum::<f64>();
        if last >= 0.0 {
            t.push(last);
            out.push(t);
        }
        let mut d = 0;
        loop {
            if d == idx.len() {
                return out;
            }
            idx[d] += 1;
            if idx[d] <= steps {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

pub fn oracle(y: &[Vec<f64>]) -> Oracle {
    let m1 = y.len();
    let steps = match m1 {
        1 => 1,
        2 => 400,
        3 => 120,
        _ => 40,
    };
    let mut best = vec![1.0; m1];
    let mut best_ss = profile(y, &best).0;
    if m1 > 1 {
        for t in grid_points(m1, steps) {
            let ss = profile(y, &t).0;
            if ss < best_ss {
                best_ss = ss;
                best = t;
            }
        }
        let mut h = m1 as f64 / steps as f64;
        while h > 1e-15 {
            let mut improved = false;
            for i in 0..m1 - 1 {
                for sign in [1.0, -1.0] {
                    let mut t = best.clone();
                    t[i] += sign * h;
                    t[m1 - 1] -= sign * h;
                    if t[i] < 0.0 || t[m1 - 1] < 0.0 {
                        continue;
                    }
                    let ss = profile(y, &t).0;
                    if ss < best_ss {
                        best_ss = ss;
                        best = t;
                        improved = true;
                    }
                }
            }
            if !improved {
                h *= 0.5;
            }
        }
    }
    let (ss, v) = profile(y, &best);
    Oracle { theta1: best, v, residual: ss.max(0.0).sqrt() }
}

/// A random exact-model table: `t` log-uniform on [0.25, 4] normalized to mean 1 and
/// per-group values in [1e-3, 1e-2].
pub fn exact_instance<R: Rng>(m1: usize, m2: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let mut t: Vec<f64> = (0..m1).map(|_| (rng.random_range(0.25f64.ln()..4f64.ln())).exp()).collect();
    let mean = t.iter().sum::<f64>() / m1 as f64;
    t.iter_mut().for_each(|x| *x /= mean);
    let v: Vec<f64> = (0..m2).map(|_| rng.random_range(1e-3..1e-2)).collect();
    let y = t.iter().map(|tc| v.iter().map(|vk| tc * vk).collect()).collect();
    (t, v, y)
}

pub fn full_history(space: &EnvironmentSpace, y: &[Vec<f64>]) -> DeploymentHistory {
    let entries = space.enumerate().into_iter().map(|e| (e, y[e.e1 - 1][e.e2 - 1]));
    DeploymentHistory::from_entries(space.clone(), entries).unwrap()
}

pub fn env(e1: usize, e2: usize) -> Environment {
    Environment::new(e1, e2)
}

/// Scripted counts of the golden encounter fixture: 5 routes by 8 groups.
pub fn golden_total(route: usize, group: usize) -> u64 {
    (4 + 5 * route + 3 * group + if (route, group) == (0, 0) { 20 } else { 0 }) as u64
}

pub fn golden_risky(route: usize, group: usize) -> u64 {
    ((route + group) % 4) as u64
}

pub const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/encounters_golden.csv");

/// Two route blobs whose standardized features are ten within-blob standard deviations
/// apart. Returns the aggregates and the blob of each route.
pub fn two_blobs<R: Rng>(per_blob: usize, rng: &mut R) -> (Vec<RouteAggregate>, Vec<usize>) {
    let mut routes = Vec::new();
    let mut blob = Vec::new();
    // Blob centres in raw feature space: (risk, log10 count).
    let centres = [(0.002, 3.0), (0.012, 4.0)];
    // sigma such that the centre distance is 10 sigma in each raw coordinate.
    let sigmas = [(0.01 / 10.0, 1.0 / 10.0)];
    for (b, &(p, lc)) in centres.iter().enumerate() {
        for i in 0..per_blob {
            let z1: f64 = rng.sample(rand_distr::StandardNormal);
            let z2: f64 = rng.sample(rand_distr::StandardNormal);
            let log_count = lc + sigmas[0].1 * z2.clamp(-3.0, 3.0);
            let total = 10f64.powf(log_count).round() as u64;
            let risk = (p + sigmas[0].0 * z1.clamp(-3.0, 3.0)).max(0.0);
            let risky = (risk * total as f64).round() as u64;
            routes.push(RouteAggregate { route_id: format!("b{b}r{i:03}"), totals: vec![total], risky: vec![risky] });
            blob.push(b);
        }
    }
    (routes, blob)
}
