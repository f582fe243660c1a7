use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};

use safedeploy::acquire::{self, AcquireConfig};
use safedeploy::deploy;
use safedeploy::fit::{self, FitConfig};
use safedeploy::rng::{stream, Stream};
use safedeploy::surrogate::IntensityModel;
use safedeploy::{DeploymentHistory, EnvironmentSpace, RiskTable, RunConfig, Strategy, WorldConfig};

fn world(space: &EnvironmentSpace) -> RiskTable {
    WorldConfig { seed: 1, ..Default::default() }.generate(space).unwrap()
}

/// A history of `n` uniformly drawn deployments on `table`.
fn history(table: &RiskTable, n: usize) -> DeploymentHistory {
    let cells = table.space().enumerate();
    let mut rng = stream(3, Stream::Initialization);
    let entries = (0..n).map(|_| {
        let e = cells[rand::Rng::random_range(&mut rng, 0..cells.len())];
        (e, table.get(e))
    });
    DeploymentHistory::from_entries(table.space().clone(), entries).unwrap()
}

fn bench_fit(c: &mut Criterion) {
    let space = EnvironmentSpace::default();
    let table = world(&space);
    let mut group = c.benchmark_group("fit");
    for n in [25usize, 100, 500] {
        let h = history(&table, n);
        group.bench_with_input(BenchmarkId::new("cold", n), &h, |b, h| {
            b.iter(|| fit::fit(h, &space, &FitConfig::default(), None).unwrap())
        });
        let warm = fit::fit(&h, &space, &FitConfig::default(), None).unwrap().theta;
        group.bench_with_input(BenchmarkId::new("warm", n), &h, |b, h| {
            b.iter(|| fit::fit(h, &space, &FitConfig::default(), Some(&warm)).unwrap())
        });
    }
    group.finish();
}

fn bench_select(c: &mut Criterion) {
    let space = EnvironmentSpace::default();
    let table = world(&space);
    let h = history(&table, 100);
    let now = fit::fit(&h, &space, &FitConfig::default(), None).unwrap();
    let prev = fit::fit(&history(&table, 99), &space, &FitConfig::default(), None).unwrap();
    let model_now = IntensityModel::new(now.theta, space.grid().clone()).unwrap();
    let model_prev = IntensityModel::new(prev.theta, space.grid().clone()).unwrap();
    let config = AcquireConfig::default();
    let alpha = acquire::alpha_of(now.avg_uncertainty, None, &config);
    c.bench_function("select_next/16x8", |b| {
        b.iter_batched(
            || stream(4, Stream::TieBreak),
            |mut rng| {
                acquire::select_next(&space, &h, &model_now, &model_prev, alpha, now.avg_uncertainty, &config, &mut rng)
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_run(c: &mut Criterion) {
    let space = EnvironmentSpace::default();
    let table = world(&space);
    let mut group = c.benchmark_group("run");
    group.sample_size(10);
    for strategy in [Strategy::Accelerated, Strategy::Random] {
        let cfg = RunConfig { strategy, seed: 2, ..Default::default() };
        group.bench_function(strategy.to_string(), |b| b.iter(|| deploy::run(&cfg, &table).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, bench_fit, bench_select, bench_run);
criterion_main!(benches);
