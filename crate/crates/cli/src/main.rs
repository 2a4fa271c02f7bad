use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use eabf::commands::{cmd_analyze, cmd_compare, cmd_optimize, cmd_simulate, CommandOutcome};
use eabf::config::{load_config, parse_config};
use eabf::RunConfig;

#[derive(Parser)]
#[command(name = "eabf", version, about = "Barring-factor EAB analysis, simulation and energy optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration; reference values are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, overriding `output_dir` in the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed for the simulator.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Monte Carlo replications per setting.
    #[arg(long, global = true)]
    replications: Option<usize>,

    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Demote successes beyond the RAR window capacity to collision backoff.
    #[arg(long, global = true)]
    rar_truncation: Option<Switch>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Analytic traces and metrics for the configured settings.
    Analyze,
    /// Monte Carlo simulation of the configured settings.
    Simulate,
    /// Grid sweep, trade-off curve and gains over the 3GPP settings.
    Optimize,
    /// Per-slot analytic versus simulated deviation.
    Compare,
}

#[derive(ValueEnum, Clone, Copy)]
enum Switch {
    On,
    Off,
}

fn resolve(cli: &Cli) -> Result<RunConfig, String> {
    let mut config = match &cli.config {
        Some(path) => load_config(path),
        None => parse_config(""),
    }
    .map_err(|e| e.to_string())?;
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.sim.master_seed = seed;
    }
    if let Some(n) = cli.replications {
        if n == 0 {
            return Err("--replications: must be at least 1".into());
        }
        config.sim.replications = n;
    }
    if let Some(switch) = cli.rar_truncation {
        config.sim.options.rar_window_truncation = matches!(switch, Switch::On);
    }
    Ok(config)
}

fn run(cli: &Cli, config: &RunConfig) -> eabf::Result<CommandOutcome> {
    match cli.command {
        Command::Analyze => cmd_analyze(config),
        Command::Simulate => cmd_simulate(config),
        Command::Optimize => cmd_optimize(config),
        Command::Compare => cmd_compare(config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads: must be at least 1");
            return ExitCode::FAILURE;
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::FAILURE;
        }
    };
    match pool.install(|| run(&cli, &config)) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            for path in &outcome.written {
                println!("wrote {}", path.display());
            }
            for failure in &outcome.failures {
                eprintln!("failed: {failure}");
            }
            if outcome.succeeded() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
