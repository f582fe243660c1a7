use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use anyhow::{anyhow, Context};

use safedeploy::deploy::{self, TerminatedBy};
use safedeploy::ingest;
use safedeploy::replication::{self, BenchSummary};
use safedeploy::rng::{self, Stream};
use safedeploy::{BenchConfig, Error, ObservationMode, RiskTable, RunConfig, WorldConfig};

use crate::config::CliConfig;
use crate::{BenchArgs, Cli, Command, GenWorldArgs, IngestArgs, ReportArgs, RunArgs, RunParamArgs, SpaceArgs, WorldArgs};

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_MAX_ITERS: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: EXIT_USAGE, error: error.into() }
}

fn runtime(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: EXIT_RUNTIME, error: error.into() }
}

/// Library errors caused by bad parameters are usage errors; everything else is a
/// runtime failure.
fn classify(error: Error) -> Failure {
    match error {
        Error::InvalidConfig(_) | Error::InvalidGrid(_) | Error::InvalidSpace(_) | Error::TooFewRoutes { .. } => usage(error),
        other => runtime(other),
    }
}

type Outcome = Result<ExitCode, Failure>;

pub fn dispatch(cli: &Cli) -> Outcome {
    let file = match &cli.config {
        Some(path) => CliConfig::load(path).map_err(usage)?,
        None => CliConfig::default(),
    };
    match &cli.command {
        Command::GenWorld(args) => gen_world(file, args),
        Command::Ingest(args) => ingest_cmd(file, args),
        Command::Run(args) => run(file, args),
        Command::Bench(args) => bench(file, args),
        Command::Report(args) => report(args),
    }
}

fn set<T>(target: &mut T, flag: &Option<T>)
where
    T: Clone,
{
    if let Some(v) = flag {
        *target = v.clone();
    }
}

fn apply_space(cfg: &mut CliConfig, args: &SpaceArgs) {
    set(&mut cfg.space.cluster_count, &args.cluster_count);
    if let Some(groups) = args.time_groups {
        cfg.space.time_groups = groups;
        cfg.space.boundaries = None;
    }
}

fn apply_world(world: &mut WorldConfig, args: &WorldArgs) {
    set(&mut world.base_risk, &args.base_risk);
    set(&mut world.diurnal_amplitude, &args.diurnal_amplitude);
    set(&mut world.cluster_spread.0, &args.spread_lo);
    set(&mut world.cluster_spread.1, &args.spread_hi);
    set(&mut world.noise_sigma, &args.noise_sigma);
    set(&mut world.floor, &args.floor);
    set(&mut world.ceiling, &args.ceiling);
}

fn apply_run_params(cfg: &mut CliConfig, args: &RunParamArgs) {
    set(&mut cfg.acquire.xi, &args.xi);
    set(&mut cfg.run.tau, &args.tau);
    if args.kappa.is_some() {
        cfg.acquire.kappa = args.kappa;
    }
    set(&mut cfg.run.n_min, &args.n_min);
    set(&mut cfg.run.n_init, &args.n_init);
    set(&mut cfg.run.max_iters, &args.max_iters);
    set(&mut cfg.fit.restarts, &args.restarts);
    if let Some(samples) = args.samples {
        cfg.run.observation = ObservationMode::MonteCarlo { samples };
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).with_context(|| format!("creating {}", path.display())).map_err(runtime)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    let mut out = create(path)?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime)
}

fn gen_world(mut cfg: CliConfig, args: &GenWorldArgs) -> Outcome {
    apply_space(&mut cfg, &args.space);
    apply_world(&mut cfg.world, &args.world);
    set(&mut cfg.world.seed, &args.seed);
    let space = cfg.space.space().map_err(classify)?;
    let table = cfg.world.generate(&space).map_err(classify)?;
    table.save(&args.out).map_err(runtime)?;
    println!(
        "wrote {} cells to {}: mean {:.6e}, min {:.6e}, max {:.6e}, digest {}",
        space.cardinality(),
        args.out.display(),
        table.mean(),
        table.min(),
        table.max(),
        table.digest()
    );
    Ok(ExitCode::SUCCESS)
}

fn ingest_cmd(mut cfg: CliConfig, args: &IngestArgs) -> Outcome {
    set(&mut cfg.ingest.k, &args.k);
    set(&mut cfg.ingest.seed, &args.seed);
    set(&mut cfg.ingest.max_iters, &args.max_iters);
    set(&mut cfg.ingest.max_range, &args.max_range);
    set(&mut cfg.ingest.rate_threshold, &args.rate_threshold);
    if let Some(groups) = args.time_groups {
        cfg.space.time_groups = groups;
        cfg.space.boundaries = None;
    }
    let criteria = cfg.ingest.criteria();
    criteria.validate().map_err(classify)?;
    let grid = cfg.space.grid().map_err(classify)?;
    let records = ingest::load_log(&args.input).map_err(runtime)?;
    let aggregates = ingest::aggregate(&records, &grid, &criteria).map_err(runtime)?;
    let mut rng = rng::stream(cfg.ingest.seed, Stream::Clustering);
    let clustering = ingest::cluster_routes(&aggregates, cfg.ingest.k, &mut rng, cfg.ingest.max_iters).map_err(classify)?;
    let table = ingest::build_risk_table(&aggregates, &clustering, &grid).map_err(runtime)?;
    table.save(&args.out).map_err(runtime)?;
    let mut out = create(&args.clusters_out)?;
    clustering.write_csv(&mut out).map_err(runtime)?;
    out.flush().with_context(|| format!("writing {}", args.clusters_out.display())).map_err(runtime)?;
    println!(
        "{} records over {} routes -> {} clusters; table mean {:.6e}",
        records.len(),
        aggregates.len(),
        clustering.k,
        table.mean()
    );
    Ok(ExitCode::SUCCESS)
}

fn load_or_generate(cfg: &CliConfig, file: &Option<std::path::PathBuf>, gen: Option<u64>) -> Result<RiskTable, Failure> {
    match (file, gen) {
        (Some(path), _) => {
            // Dimensions come from the file; only explicit boundaries need a grid.
            let grid = match cfg.space.boundaries {
                Some(_) => Some(cfg.space.grid().map_err(classify)?),
                None => None,
            };
            RiskTable::load(path, grid).map_err(runtime)
        }
        (None, Some(seed)) => {
            let space = cfg.space.space().map_err(classify)?;
            WorldConfig { seed, ..cfg.world.clone() }.generate(&space).map_err(classify)
        }
        (None, None) => Err(usage(anyhow!("either --world or --gen is required"))),
    }
}

fn run(mut cfg: CliConfig, args: &RunArgs) -> Outcome {
    apply_space(&mut cfg, &args.space);
    apply_world(&mut cfg.world, &args.world_params);
    apply_run_params(&mut cfg, &args.params);
    set(&mut cfg.run.strategy, &args.strategy);
    set(&mut cfg.run.seed, &args.seed);
    let run_config: RunConfig = cfg.run_config();
    run_config.validate().map_err(classify)?;
    let world = load_or_generate(&cfg, &args.world, args.gen)?;
    let result = deploy::run(&run_config, &world).map_err(classify)?;
    let mut log = create(&args.log)?;
    result.write_log(&mut log).map_err(runtime)?;
    log.flush().with_context(|| format!("writing {}", args.log.display())).map_err(runtime)?;
    write_text(&args.summary, &(result.summary_json().map_err(runtime)? + "\n"))?;
    println!(
        "{}: n* = {} ({}), mean f = {:.4e}, std f = {:.4e}, final avg z = {:.4e}",
        result.strategy,
        result.n_star,
        match result.terminated_by {
            TerminatedBy::ToleranceMet => "tolerance met",
            TerminatedBy::MaxIters => "max iterations",
        },
        result.summary.mean_f,
        result.summary.std_f,
        result.summary.final_avg_z
    );
    Ok(match result.terminated_by {
        TerminatedBy::ToleranceMet => ExitCode::SUCCESS,
        TerminatedBy::MaxIters => ExitCode::from(EXIT_MAX_ITERS),
    })
}

fn print_summary(s: &BenchSummary) {
    println!("{:<22}{:>14}{:>14}", "", "accelerated", "random");
    let row = |name: &str, a: f64, r: f64| println!("{name:<22}{a:>14.4e}{r:>14.4e}");
    row("Avg f", s.accelerated.mean_f, s.random.mean_f);
    row("Std f", s.accelerated.std_f, s.random.std_f);
    row("Avg z(n*)", s.accelerated.mean_final_avg_z, s.random.mean_final_avg_z);
    println!("{:<22}{:>14.1}{:>14.1}", "Mean n*", s.accelerated.mean_n_star, s.random.mean_n_star);
    println!("{:<22}{:>14.1}{:>14.1}", "Median n*", s.accelerated.median_n_star, s.random.median_n_star);
    println!("replications: {}", s.replications);
    println!("acceleration ratio: {:.3} (median per pair {:.3})", s.acceleration_ratio, s.median_pair_ratio);
    println!("pairs with lower accelerated mean f: {:.1}%", 100.0 * s.fraction_lower_mean_f);
}

fn summary_json(s: &BenchSummary) -> Result<String, Failure> {
    serde_json::to_string_pretty(s).map(|t| t + "\n").map_err(runtime)
}

fn bench(mut cfg: CliConfig, args: &BenchArgs) -> Outcome {
    apply_space(&mut cfg, &args.space);
    apply_world(&mut cfg.world, &args.world_params);
    apply_run_params(&mut cfg, &args.params);
    set(&mut cfg.bench.replications, &args.replications);
    set(&mut cfg.bench.seed, &args.seed);
    set(&mut cfg.bench.jobs, &args.jobs);
    let bench_config = BenchConfig {
        replications: cfg.bench.replications,
        seed: cfg.bench.seed,
        world: cfg.world.clone(),
        run: cfg.run_config(),
        jobs: cfg.bench.jobs,
    };
    bench_config.validate().map_err(classify)?;
    let space = cfg.space.space().map_err(classify)?;
    let out = replication::replicate(&bench_config, &space).map_err(classify)?;
    if !out.pairs.is_empty() {
        let summary = replication::summarize(&out.pairs).map_err(runtime)?;
        write_text(&args.summary, &summary_json(&summary)?)?;
        replication::export_curves(&out.pairs, &args.curves).map_err(runtime)?;
        print_summary(&summary);
    }
    if let Some(first) = out.failures.first() {
        return Err(runtime(anyhow!(
            "{} of {} replications failed; first: replication {}: {}",
            out.failures.len(),
            bench_config.replications,
            first.replication,
            first.message
        )));
    }
    Ok(ExitCode::SUCCESS)
}

fn report(args: &ReportArgs) -> Outcome {
    let rows = replication::load_curves(&args.curves).map_err(runtime)?;
    let traces = replication::traces_from_curves(&rows).map_err(runtime)?;
    let summary = replication::summarize_traces(&traces).map_err(runtime)?;
    if let Some(path) = &args.summary {
        write_text(path, &summary_json(&summary)?)?;
    }
    print_summary(&summary);
    Ok(ExitCode::SUCCESS)
}
