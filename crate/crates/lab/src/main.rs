use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lab_core::harness::{self, Experiment, ExperimentConfig};
use lab_core::Error;

/// Simulation lab for heavy-traffic queues fed by ON/OFF sources.
///
/// Settings come from a JSON config file; `--seed`, `--out` and `--workers`
/// override the matching keys in the file. Exit status: 0 if every check
/// passes, 1 if one fails, 2 on a config or regime error.
#[derive(Parser)]
#[command(name = "lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the limit constants (gamma, tail constants, pi^2, H, ...).
    ///
    /// The tail ratio b is taken as the limit over x of
    /// x^(alpha_off - alpha_on) L_on(x) / L_off(x).
    Params(Common),
    /// Run one queue replication and write its trace.
    Simulate(Common),
    /// Compare direct and modulated arrival constructions.
    Lemma1(Common),
    /// N-scaled queue against the reflected Gaussian limit.
    Theorem1(Common),
    /// R-scaled queue against the reflected fractional Brownian limit.
    Theorem2(Common),
    /// Sup-gap between scaled queue length and scaled workload.
    Collapse(Common),
    /// Hurst estimation on fGn and on arrival counts.
    Hurst(Common),
    /// Variance of the scaled cumulative ON time.
    VarianceCurve(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config file; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV files and the summary.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
}

impl Command {
    fn split(self) -> (Experiment, Common) {
        match self {
            Command::Params(c) => (Experiment::Params, c),
            Command::Simulate(c) => (Experiment::Simulate, c),
            Command::Lemma1(c) => (Experiment::Lemma1, c),
            Command::Theorem1(c) => (Experiment::Theorem1, c),
            Command::Theorem2(c) => (Experiment::Theorem2, c),
            Command::Collapse(c) => (Experiment::Collapse, c),
            Command::Hurst(c) => (Experiment::Hurst, c),
            Command::VarianceCurve(c) => (Experiment::VarianceCurve, c),
        }
    }
}

fn load(common: Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if common.out.is_some() {
        cfg.output = common.out;
    }
    if common.workers.is_some() {
        cfg.workers = common.workers;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let (experiment, common) = Cli::parse().command.split();
    let result = load(common).and_then(|cfg| harness::run(experiment, &cfg));
    match result {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
