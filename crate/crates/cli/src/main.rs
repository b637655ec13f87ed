use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod operands;

/// PAC-Bayes bounds with total variation, Wasserstein and KL divergences.
#[derive(Debug, Parser)]
#[command(name = "ipm-pacbayes", version)]
pub struct Cli {
    /// Master seed for experiments and verification suites.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for experiment outputs.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// JSON experiment configuration (a results.json is accepted too).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate a divergence between two measures.
    Divergence(commands::DivergenceArgs),
    /// Evaluate a generalization bound.
    Bound(commands::BoundArgs),
    /// Run the linear-regression experiment and write results.csv, results.json, plot.svg.
    Experiment(commands::ExperimentArgs),
    /// Run a verification suite.
    Verify(commands::VerifyArgs),
}

/// Process exit status.
pub enum Outcome {
    Ok,
    Failed,
    Undefined,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Divergence(a) => commands::divergence(a),
        Command::Bound(a) => commands::bound(a),
        Command::Experiment(a) => {
            commands::experiment(a, cli.config.as_deref(), cli.seed, cli.out_dir.as_deref())
        }
        Command::Verify(a) => commands::verify(a, cli.seed),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Ok(Outcome::Undefined) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
