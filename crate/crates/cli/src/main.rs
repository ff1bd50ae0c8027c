//! Command-line interface for random covariance clustering.

mod artifact;
mod commands;
mod error;
mod files;
mod schema;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{BenchmarkArgs, EvaluateArgs, FitArgs, GapArgs, SimulateArgs, StarsArgs};
use error::CliResult;

/// Joint clustering and sparse precision-matrix estimation for
/// multi-subject time series.
///
/// Exit status: 0 success, 1 other failure, 2 usage error, 3 configuration
/// schema error, 4 input data error, 5 invalid tuning parameters, 6 EM did
/// not converge (results still written), 7 no stable stARS candidate
/// (report still written).
#[derive(Debug, Parser)]
#[command(name = "rccm", version)]
struct Cli {
    /// Cap on worker threads; all cores by default.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic panel with known clusters and networks.
    Simulate(SimulateArgs),
    /// Fit the model to a directory of subject CSV files.
    Fit(FitArgs),
    /// Select tuning parameters by subsample stability.
    Stars(StarsArgs),
    /// Choose the number of clusters with the gap statistic.
    Gap(GapArgs),
    /// Run repeated simulations and tabulate clustering and edge recovery.
    Benchmark(BenchmarkArgs),
    /// Score a fit against simulation truth.
    Evaluate(EvaluateArgs),
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(anyhow::Error::from)?;
    }
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Stars(a) => commands::stars(a),
        Command::Gap(a) => commands::gap(a),
        Command::Benchmark(a) => commands::benchmark(a),
        Command::Evaluate(a) => commands::evaluate_fit(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
