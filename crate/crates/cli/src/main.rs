//! `safl` command-line interface.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use safl::harness::{report, run_experiment, ExperimentConfig, Scenario};
use safl::learnability::{impossibility_failure_rate, ImpossibilityInstance};

/// Simulator for server-assisted federated learning under incomplete client
/// participation.
#[derive(Debug, Parser)]
#[command(name = "safl", version, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the base cell of a scenario for a single seed
    Run(ExperimentArgs),
    /// Run every cell and seed of a scenario's sweep
    Sweep(ExperimentArgs),
    /// Monte-Carlo failure rate of the two-point impossibility construction
    Impossibility(ImpossibilityArgs),
    /// Threshold-class PAC rate study
    Pac(PacArgs),
    /// Recompute summaries and pass/fail checks from an output directory
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Experiment config file (TOML)
    #[arg(long, short, conflicts_with = "scenario", required_unless_present = "scenario")]
    config: Option<PathBuf>,
    /// Start from a scenario's built-in defaults instead of a config file
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<Scenario>,
    /// Override a config value, e.g. --set algorithm.q=0.25 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Base seed; sweeps use consecutive seeds starting here
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (default: config out_dir, or $SAFL_OUT_DIR)
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Debug, Args)]
struct ImpossibilityArgs {
    /// System capacity omega = m/M in (0, 1)
    #[arg(long)]
    omega: f64,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Number of clients M
    #[arg(long, default_value_t = 10)]
    clients: usize,
    /// Samples per client n
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Debug, Args)]
struct PacArgs {
    /// Trials per grid point
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Total sample sizes n = n_T + n_S
    #[arg(long, value_delimiter = ',', default_values_t = [100usize, 1_000, 10_000, 100_000])]
    n_grid: Vec<usize>,
    /// Fraction n_T / n drawn from the server distribution
    #[arg(long, default_value_t = 0.1)]
    server_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Output directory written by `run` or `sweep`
    dir: PathBuf,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: safl::Error| e.to_string())
}

fn experiment_config(args: &ExperimentArgs, sweep: bool) -> Result<ExperimentConfig> {
    let mut cfg = match (&args.config, args.scenario) {
        (Some(path), _) => ExperimentConfig::load(path, &args.overrides)?,
        (None, Some(sc)) => ExperimentConfig::with_overrides(sc, &args.overrides)?,
        (None, None) => unreachable!("clap requires one of --config/--scenario"),
    };
    let count = cfg.sweep.seeds.len().max(1) as u64;
    if sweep {
        cfg.sweep.seeds = (args.seed..args.seed + count).collect();
    } else {
        let base = cfg.clone();
        cfg.sweep = safl::harness::SweepConfig { seeds: vec![args.seed], ..Default::default() };
        // a single run keeps the first value of every swept axis
        if let Some(&q) = base.sweep.q.first() {
            cfg.algorithm.q = q;
        }
        if let Some(&r) = base.sweep.rounds.first() {
            cfg.algorithm.rounds = r;
        }
        if let Some(&s) = base.sweep.s.first() {
            cfg.participation.s = s;
        }
        if let Some(&p) = base.sweep.p.first() {
            cfg.population.labels_per_client = p;
        }
        if let Some(&n) = base.sweep.n_t.first() {
            cfg.population.n_t = n;
        }
        if let Some(&m) = base.sweep.m.first() {
            cfg.participation.m = m;
        }
        if let Some(&k) = base.sweep.local_steps.first() {
            cfg.algorithm.local_steps = k;
        }
        cfg.validate()?;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    } else if let Some(env) = std::env::var_os("SAFL_OUT_DIR") {
        cfg.out_dir = PathBuf::from(env);
    }
    Ok(cfg)
}

fn run_cmd(args: &ExperimentArgs, sweep: bool) -> Result<()> {
    let cfg = experiment_config(args, sweep)?;
    let out = run_experiment(&cfg, args.workers)?;
    println!(
        "{}: {} cells, {} seeds -> {}",
        cfg.scenario,
        out.manifest.cells.len(),
        out.manifest.seeds.len(),
        out.out_dir.display()
    );
    for fit in &out.fits {
        println!("  {} vs R [{}]: slope {:.4} (r2 {:.3})", fit.metric, fit.group, fit.fit.slope, fit.fit.r_squared);
    }
    Ok(())
}

fn impossibility_cmd(args: &ImpossibilityArgs) -> Result<()> {
    let inst = ImpossibilityInstance::new(args.clients, args.samples, args.omega, args.trials)?;
    let rep = safl::par::with_workers(args.workers, || impossibility_failure_rate(&inst, args.seed))?;
    println!(
        "omega={} M={} n={} trials={} eps={:.6}",
        args.omega, args.clients, args.samples, args.trials, inst.epsilon
    );
    println!(
        "failure rate {:.4}  95% Wilson [{:.4}, {:.4}]  (threshold 0.05)",
        rep.failure.fraction, rep.failure.lower, rep.failure.upper
    );
    println!(
        "P[#x2 >= (1-omega)Mn] {:.4}  95% Wilson [{:.4}, {:.4}]",
        rep.rare_excess.fraction, rep.rare_excess.lower, rep.rare_excess.upper
    );
    println!("mean risk {:.6}", rep.mean_risk);
    Ok(())
}

fn pac_cmd(args: &PacArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::defaults(Scenario::Pac);
    cfg.learnability.trials = args.trials;
    cfg.learnability.n_grid = args.n_grid.clone();
    cfg.learnability.server_fraction = args.server_fraction;
    cfg.validate()?;
    let s = safl::par::with_workers(args.workers, || safl::harness::pac_study(&cfg, args.seed))?;
    println!("{:>10} {:>8} {:>14} {:>14} {:>14}", "n", "n_T", "mixture", "centralized", "client-only");
    for (i, n) in s.mixture.n_grid.iter().enumerate() {
        println!(
            "{n:>10} {:>8} {:>14.6e} {:>14.6e} {:>14.6e}",
            s.n_t[i], s.mixture.mean_excess[i], s.centralized[i], s.client_only[i]
        );
    }
    println!("fitted slope {:.4} (r2 {:.4})", s.mixture.fit.slope, s.mixture.fit.r_squared);
    Ok(())
}

fn report_cmd(args: &ReportArgs) -> Result<bool> {
    let rep = report(&args.dir).with_context(|| format!("reading {}", args.dir.display()))?;
    print!("{rep}");
    Ok(rep.all_passed())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<safl::Error>())
        .map_or(1, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run_cmd(a, false).map(|_| true),
        Command::Sweep(a) => run_cmd(a, true).map(|_| true),
        Command::Impossibility(a) => impossibility_cmd(a).map(|_| true),
        Command::Pac(a) => pac_cmd(a).map(|_| true),
        Command::Report(a) => report_cmd(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
