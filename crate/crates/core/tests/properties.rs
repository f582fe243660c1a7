mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use safedeploy::acquire::{self, AcquireConfig};
use safedeploy::fit::{self, residual_norm, FitConfig};
use safedeploy::ingest::{self, EncounterRecord, RiskyEventCriteria};
use safedeploy::surrogate::{IntensityModel, Theta};
use safedeploy::{DeploymentHistory, EnvironmentSpace, TimeGrid};

use common::*;

fn grid_strategy() -> impl Strategy<Value = TimeGrid> {
    prop::collection::btree_set(1u32..2399, 0..8).prop_map(|cuts| {
        let mut b = vec![0.0];
        b.extend(cuts.into_iter().map(|c| c as f64 / 100.0));
        b.push(24.0);
        TimeGrid::new(b).unwrap()
    })
}

fn model_strategy() -> impl Strategy<Value = (IntensityModel, usize)> {
    (grid_strategy(), 1usize..5).prop_flat_map(|(grid, m1)| {
        let m2 = grid.group_count();
        (
            prop::collection::vec(0.0f64..4.0, m1),
            -0.05f64..0.2,
            prop::collection::vec(-0.01f64..0.01, m2 - 1),
        )
            .prop_map(move |(t1, t20, l)| (IntensityModel::new(Theta::new(t1, t20, l), grid.clone()).unwrap(), m1))
    })
}

proptest! {
    #[test]
    fn cumulative_intensity_closes_the_day((model, _) in model_strategy()) {
        prop_assert!(model.cumulative_intensity(24.0).unwrap().abs() <= 1e-12);
        prop_assert!(model.cumulative_intensity(0.0).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn predictions_are_probabilities((model, m1) in model_strategy()) {
        let space = EnvironmentSpace::new(m1, model.grid().clone()).unwrap();
        for e in space.enumerate() {
            let p = model.predict(e);
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert_eq!(p, model.predict_raw(e).clamp(0.0, 1.0));
        }
    }

    #[test]
    fn rescaling_theta_leaves_predictions_unchanged((model, m1) in model_strategy(), s in 0.05f64..20.0) {
        let mut theta = model.theta().clone();
        theta.theta1.iter_mut().for_each(|t| *t *= s);
        theta.theta2_0 /= s;
        theta.lambdas.iter_mut().for_each(|l| *l /= s);
        let scaled = IntensityModel::new(theta, model.grid().clone()).unwrap();
        let space = EnvironmentSpace::new(m1, model.grid().clone()).unwrap();
        for e in space.enumerate() {
            let (a, b) = (model.predict_raw(e), scaled.predict_raw(e));
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{} vs {}", a, b);
        }
    }

    #[test]
    fn fit_is_never_worse_than_the_flat_model(
        seed in any::<u64>(),
        values in prop::collection::vec(0.0f64..0.05, 1..40),
    ) {
        let space = EnvironmentSpace::uniform(4, 4).unwrap();
        let cells = space.enumerate();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries: Vec<_> = values
            .iter()
            .map(|&v| (cells[rand::Rng::random_range(&mut rng, 0..cells.len())], v))
            .collect();
        let history = DeploymentHistory::from_entries(space.clone(), entries).unwrap();
        let result = fit::fit(&history, &space, &FitConfig::default(), None).unwrap();
        // The best constant model: theta1 = 1, flat temporal term at the sample mean.
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let flat = residual_norm(&history, &Theta::new(vec![1.0; 4], mean, vec![0.0; 3]));
        prop_assert!(result.residual_z <= flat + 1e-15);
        let mean_t1 = result.theta.theta1.iter().sum::<f64>() / 4.0;
        prop_assert!((mean_t1 - 1.0).abs() <= 1e-9 || result.theta.theta1.iter().all(|&t| t == 0.0));
        prop_assert!((residual_norm(&history, &result.theta) - result.residual_z).abs() <= 1e-15);
    }

    #[test]
    fn alpha_is_nondecreasing_and_bounded(zs in prop::collection::vec(0.0f64..0.1, 1..30)) {
        let config = AcquireConfig::default();
        let mut prev = None;
        for z in zs {
            let a = acquire::alpha_of(z, prev, &config);
            prop_assert!(a > 0.0 && a <= 1.0);
            if let Some(p) = prev {
                prop_assert!(a >= p);
            }
            prev = Some(a);
        }
    }

    #[test]
    fn tightening_the_criteria_never_adds_risky_events(
        range in 0.0f64..100.0,
        rate in -50.0f64..50.0,
        max_range in 0.0f64..50.0,
        shrink in 0.0f64..50.0,
        threshold in -20.0f64..20.0,
        lower in 0.0f64..20.0,
    ) {
        let record = EncounterRecord { route_id: "r".into(), timestamp: 1.0, range, range_rate: rate };
        let loose = RiskyEventCriteria { max_range, rate_threshold: threshold };
        let tight = RiskyEventCriteria { max_range: (max_range - shrink).max(0.0), rate_threshold: threshold - lower };
        if ingest::is_risky(&record, &tight) {
            prop_assert!(ingest::is_risky(&record, &loose));
        }
    }

    #[test]
    fn aggregate_counts_every_record_once(
        rows in prop::collection::vec((0usize..4, 0.0f64..24.0, 0.0f64..30.0, -5.0f64..5.0), 1..200),
    ) {
        let records: Vec<EncounterRecord> = rows
            .iter()
            .map(|&(r, t, range, rate)| EncounterRecord { route_id: format!("r{r}"), timestamp: t, range, range_rate: rate })
            .collect();
        let criteria = RiskyEventCriteria::default();
        let aggs = ingest::aggregate(&records, &TimeGrid::default(), &criteria).unwrap();
        let total: u64 = aggs.iter().map(|a| a.total_count()).sum();
        let risky: u64 = aggs.iter().map(|a| a.risky_count()).sum();
        prop_assert_eq!(total as usize, records.len());
        prop_assert_eq!(risky as usize, records.iter().filter(|r| ingest::is_risky(r, &criteria)).count());
        prop_assert!(aggs.windows(2).all(|w| w[0].route_id < w[1].route_id));
    }
}

#[test]
fn fit_matches_brute_force_on_small_full_tables() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for &(m1, m2) in &[(2usize, 2usize), (2, 3), (3, 2), (3, 3)] {
        let space = EnvironmentSpace::uniform(m1, m2).unwrap();
        for _ in 0..5 {
            // Off-family tables: an exact bilinear table plus independent cell noise.
            let (_, _, mut y) = exact_instance(m1, m2, &mut rng);
            for row in y.iter_mut() {
                for v in row.iter_mut() {
                    *v *= rand::Rng::random_range(&mut rng, 0.5..1.5);
                }
            }
            let history = full_history(&space, &y);
            let result = fit::fit(&history, &space, &FitConfig::default(), None).unwrap();
            let reference = oracle(&y);
            assert!(
                (result.residual_z - reference.residual).abs() <= 1e-8,
                "{m1}x{m2}: fit {} vs brute force {}",
                result.residual_z,
                reference.residual
            );
        }
    }
}
