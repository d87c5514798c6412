//! Command-line driver: scenario generation, end-to-end tracking, identity
//! evaluation, re-identification ranking and the solver speedup benchmark.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 validation failure.

mod commands;
mod config;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "cdsc", version, about = "Constrained dominant-set clustering and multi-camera tracking")]
pub struct Cli {
    /// Configuration file for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Random seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; 1 reproduces parallel results exactly.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Penalty bound mode for the solver.
    #[arg(long, global = true, value_enum)]
    solver: Option<SolverMode>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolverMode {
    Exact,
    Fast,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-camera dataset with ground truth.
    Synth,
    /// Run the full tracking pipeline over a dataset.
    Track,
    /// Score predicted trajectories against ground truth.
    Eval {
        /// Predicted trajectories CSV.
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth trajectories CSV.
        #[arg(long)]
        truth: PathBuf,
    },
    /// Rank a gallery against query nodes.
    Reid {
        /// Gallery feature table (.csv or .bin with sidecar header).
        #[arg(long)]
        features: PathBuf,
        /// Comma-separated query node ids.
        #[arg(long)]
        query: String,
        /// Ranking order.
        #[arg(long, value_enum, default_value_t = commands::ReidMode::Membership)]
        mode: commands::ReidMode,
        /// Kernel width override.
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Compare baseline and localized solver timings on random instances.
    Bench {
        /// Comma-separated problem sizes.
        #[arg(long, default_value = "100,500,1000,2000")]
        sizes: String,
        /// Instances per size.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Edge density of the random graphs.
        #[arg(long, default_value_t = 0.01)]
        density: f64,
        /// Iteration cap per solve; the baseline replicator may need tens
        /// of thousands of iterations to certify convergence.
        #[arg(long, default_value_t = 10_000)]
        max_iters: usize,
    },
}

/// Failures carry the exit code they map to.
pub enum Failure {
    /// Bad configuration or malformed input: exit 2.
    Validation(String),
    /// IO or solver trouble at run time: exit 1.
    Runtime(String),
}

impl From<cdsc::Error> for Failure {
    fn from(e: cdsc::Error) -> Self {
        use cdsc::Error::*;
        match &e {
            Parse { .. } | Config(_) | Invalid(_) | Dimension(_) | GammaUndefined
            | UnknownZone { .. } => Failure::Validation(e.to_string()),
            Io { .. } | DegeneratePayoff | Uncovered(_) => Failure::Runtime(e.to_string()),
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be positive");
            std::process::exit(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .ok();
    }
    let code = match dispatch(cli) {
        Ok(()) => 0,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {}", msg);
            2
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {}", msg);
            1
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Synth => commands::synth(&cli),
        Command::Track => commands::track(&cli),
        Command::Eval { pred, truth } => commands::eval(&cli, pred, truth),
        Command::Reid {
            features,
            query,
            mode,
            gamma,
        } => commands::reid(&cli, features, query, *mode, *gamma),
        Command::Bench {
            sizes,
            seeds,
            density,
            max_iters,
        } => commands::bench(&cli, sizes, *seeds, *density, *max_iters),
    }
}
