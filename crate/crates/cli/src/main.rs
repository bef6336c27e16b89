use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use rayon::prelude::*;

use mecmig::migration::estimate_times;
use mecmig::report;
use mecmig::{scenarios, Error, PlannerKind, RunOutput, WorldState};

/// Coordinated container migration and handover simulator for mobile edge computing.
#[derive(Debug, Parser)]
#[command(name = "mecmig", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one scenario under one planner.
    Run(RunArgs),
    /// Run every (planner, seed) combination and write comparison tables.
    Compare(CompareArgs),
    /// Print checkpoint sizes and migration time estimates for each application.
    Probe {
        /// Bundled scenario name (simple, openface, yolo) or path to a scenario file.
        #[arg(long)]
        scenario: String,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Bundled scenario name (simple, openface, yolo) or path to a scenario file.
    #[arg(long)]
    scenario: String,
    /// cloud, random, nearest or orchestrated.
    #[arg(long)]
    planner: PlannerKind,
    /// Defaults to the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated seconds; defaults to the scenario's duration.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, env = "MECMIG_OUT_DIR", default_value = "mecmig-out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    scenario: String,
    /// Comma-separated planner names.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "cloud,random,nearest,orchestrated"
    )]
    planners: Vec<PlannerKind>,
    /// `N`, `N..M` (exclusive) or `N..=M`.
    #[arg(long, default_value = "0..5", value_parser = parse_seeds)]
    seeds: Seeds,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, env = "MECMIG_OUT_DIR", default_value = "mecmig-out")]
    out: PathBuf,
}

#[derive(Debug, Clone)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let num = |x: &str| {
        x.trim()
            .parse::<u64>()
            .map_err(|e| format!("bad seed `{x}`: {e}"))
    };
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..=") {
        (num(a)?..=num(b)?).collect()
    } else if let Some((a, b)) = s.split_once("..") {
        (num(a)?..num(b)?).collect()
    } else {
        vec![num(s)?]
    };
    if seeds.is_empty() {
        return Err(format!("seed range `{s}` is empty"));
    }
    Ok(Seeds(seeds))
}

fn run_one(
    world: &WorldState,
    planner: PlannerKind,
    seed: u64,
    duration: Option<f64>,
) -> mecmig::Result<RunOutput> {
    let duration = duration.unwrap_or(world.sim.duration_s);
    mecmig::run(world.clone(), planner, seed, duration)
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let world = load(&args.scenario)?;
    let seed = args.seed.unwrap_or(world.sim.seed);
    let out = run_one(&world, args.planner, seed, args.duration)?;
    out.write_to(&args.out)?;
    let s = out.summary();
    println!(
        "{} seed {}: {} requests ({} completed), mean E2E {} ms, downtime {:.3} s over {} intervals",
        s.planner,
        s.seed,
        s.requests,
        s.completed,
        s.mean_total_ms.map(|m| format!("{m:.3}")).unwrap_or_else(|| "-".into()),
        s.total_downtime_s,
        s.downtime_intervals,
    );
    println!("outputs written to {}", args.out.display());
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), Failure> {
    let world = load(&args.scenario)?;
    let mut planners = args.planners.clone();
    planners.sort();
    planners.dedup();
    let combos: Vec<(PlannerKind, u64)> = planners
        .iter()
        .flat_map(|&p| args.seeds.0.iter().map(move |&s| (p, s)))
        .collect();
    info!("running {} simulations", combos.len());
    let outputs: Vec<RunOutput> = combos
        .par_iter()
        .map(|&(p, s)| run_one(&world, p, s, args.duration))
        .collect::<mecmig::Result<_>>()?;
    for o in &outputs {
        o.write_to(args.out.join(format!("{}_seed{}", o.planner, o.seed)))?;
    }
    let summary = report::summarize(&outputs)?;
    report::emit(&summary, &args.out)?;

    println!(
        "{:<10} {:<13} {:>5} {:>12} {:>10} {:>14} {:>10}",
        "app", "planner", "runs", "mean_e2e_ms", "std_ms", "downtime_s", "std_s"
    );
    for g in &summary.groups {
        println!(
            "{:<10} {:<13} {:>5} {:>12.3} {:>10.3} {:>14.3} {:>10.3}",
            g.app,
            g.planner,
            g.runs,
            g.total_ms.mean,
            g.total_ms.std,
            g.downtime_s.mean,
            g.downtime_s.std
        );
    }
    for r in &summary.reductions {
        println!(
            "{} orchestrated vs {}: E2E {:.1}% lower, downtime {} lower",
            r.app,
            r.baseline,
            100.0 * r.e2e,
            r.downtime
                .map(|d| format!("{:.1}%", 100.0 * d))
                .unwrap_or_else(|| "n/a".into())
        );
    }
    println!("outputs written to {}", args.out.display());
    Ok(())
}

fn size(bytes: f64) -> String {
    if bytes >= 1e9 {
        format!("{:.2} GB", bytes / 1e9)
    } else if bytes >= 1e6 {
        format!("{:.2} MB", bytes / 1e6)
    } else {
        format!("{:.2} KB", bytes / 1e3)
    }
}

fn cmd_probe(scenario: &str) -> Result<(), Failure> {
    let world = load(scenario)?;
    println!(
        "{:<10} {:>10} {:>12} {:>10} {:>10}",
        "app", "image", "checkpoint", "delta", "reduction"
    );
    for p in &world.apps {
        println!(
            "{:<10} {:>10} {:>12} {:>10} {:>9.2}%",
            p.app_name,
            size(p.image_size_bytes),
            size(p.checkpoint_size_bytes),
            size(p.delta_size_bytes),
            100.0 * p.reduction_ratio()
        );
    }
    println!();
    println!(
        "{:<10} {:<8} {:<8} {:>9} {:>12} {:>9} {:>10} {:>10} {:>9}",
        "app", "src", "dst", "t_chkpt", "t_pre_trans", "t_trans", "t_restore", "t_pre_mig", "t_mig"
    );
    for p in &world.apps {
        for src in &world.servers {
            for dst in world.servers.iter().filter(|d| d.id != src.id) {
                let e = estimate_times(p, src, dst, &world.links)?;
                println!(
                    "{:<10} {:<8} {:<8} {:>9.4} {:>12.4} {:>9.4} {:>10.4} {:>10.4} {:>9.4}",
                    p.app_name,
                    src.name,
                    dst.name,
                    e.t_chkpt,
                    e.t_pre_trans,
                    e.t_trans,
                    e.t_restore,
                    e.t_pre_mig,
                    e.t_mig
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Probe { scenario } => cmd_probe(&scenario),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Failure of a subcommand, split by exit code.
enum Failure {
    Config(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e)
        } else {
            Failure::Runtime(e)
        }
    }
}

/// A scenario that cannot be read is a configuration problem, whatever the cause.
fn load(scenario: &str) -> Result<WorldState, Failure> {
    scenarios::load(scenario).map_err(Failure::Config)
}
