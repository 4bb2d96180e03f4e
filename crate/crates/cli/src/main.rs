//! Experiment driver: dataset generation, training, prediction, skill
//! evaluation, macro-parameter tuning, and parameter sweeps, all from a
//! declarative TOML configuration.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical divergence
//! (when `fail_on_divergence` is set), 4 integrity error.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "turbem",
    about = "Reservoir-computing emulators of chaotic dynamics with spectral diagnostics",
    version
)]
struct Cli {
    /// Experiment configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every stochastic choice in the invocation.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for data-parallel stages (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset container from the configured system.
    Generate {
        /// Output dataset container.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a dataset and write a checkpoint.
    Train {
        /// Input dataset container.
        #[arg(long)]
        data: PathBuf,
        /// Output checkpoint.
        #[arg(long)]
        out: PathBuf,
        /// Macro-parameter JSON (as written by `tune`); overrides the
        /// `architecture.macro_params` block.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Run one autonomous forecast from a trained checkpoint.
    Predict {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Output forecast container.
        #[arg(long)]
        out: PathBuf,
        /// Which of the seeded test initial conditions to run.
        #[arg(long, default_value_t = 0)]
        sample: usize,
    },
    /// Evaluate a checkpoint over the seeded test initial conditions.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Output directory for the report files.
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
    },
    /// Bayesian optimization of the ESN macro parameters.
    Tune {
        #[arg(long)]
        data: PathBuf,
        /// Best-parameters JSON output.
        #[arg(long)]
        out: PathBuf,
        /// Line-delimited JSON evaluation journal (appended; read for
        /// resume).
        #[arg(long)]
        journal: Option<PathBuf>,
    },
    /// Full tune-train-evaluate pipeline per value of the sweep axis.
    Sweep {
        /// Optional pre-generated dataset at native cadence.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "sweep")]
        out_dir: PathBuf,
    },
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<turbem::Error>() {
        match e {
            turbem::Error::Config(_) | turbem::Error::Shape { .. } => 2,
            turbem::Error::Blowup { .. } | turbem::Error::Divergence { .. } => 3,
            turbem::Error::Integrity(_) | turbem::Error::Version { .. } => 4,
            _ => 1,
        }
    } else if err.downcast_ref::<toml::de::Error>().is_some() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: could not configure {jobs} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
