//! `singletbb` — design and analyze bang-bang singlet-order transfer pulses.
//!
//! Data files are deterministic per (config, seed); progress and reports go
//! to stdout/stderr. Set RAYON_NUM_THREADS to override the worker count.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use singletbb::cli;
use singletbb::relax::FitModel;

#[derive(Parser)]
#[command(name = "singletbb", version, about = "Bang-bang singlet-order pulse design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config file: schema, dimension, memory, z-commutation.
    Validate { config: PathBuf },
    /// Run the genetic optimizer and export pulse table, history, trajectory.
    Optimize {
        config: PathBuf,
        /// Master seed; overrides the config-file seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for artifacts.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Proceed past the Hilbert-dimension memory guard.
        #[arg(long)]
        force: bool,
    },
    /// Propagate a pulse table and emit the (time, Q, enhancement) trajectory.
    Simulate {
        config: PathBuf,
        pulse_table: PathBuf,
        /// Record every Nth segment.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Iterate heat-bath algorithmic cooling and tabulate the singlet order.
    Hbac {
        config: PathBuf,
        /// Number of cooling iterations beyond the initial transfer.
        #[arg(long, default_value_t = 5)]
        iterations: usize,
        /// Use this optimized pulse table as the exact transfer gain.
        #[arg(long)]
        pulse: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Fit a monoexponential to two-column (time_s, value) data.
    Fit {
        data: PathBuf,
        #[arg(long, value_enum)]
        model: Model,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Decay,
    Inversion,
}

fn run() -> singletbb::Result<bool> {
    let args = Cli::parse();
    match args.command {
        Command::Validate { config } => {
            let (report, passed) = cli::cmd_validate(&config)?;
            print!("{report}");
            Ok(passed)
        }
        Command::Optimize {
            config,
            seed,
            out,
            force,
        } => {
            let (report, _) = cli::cmd_optimize(&config, seed, &out, force)?;
            print!("{report}");
            Ok(true)
        }
        Command::Simulate {
            config,
            pulse_table,
            stride,
            out,
            force,
        } => {
            let (report, _) = cli::cmd_simulate(&config, &pulse_table, stride, &out, force)?;
            print!("{report}");
            Ok(true)
        }
        Command::Hbac {
            config,
            iterations,
            pulse,
            out,
        } => {
            let (report, _) = cli::cmd_hbac(&config, iterations, pulse.as_deref(), &out)?;
            print!("{report}");
            Ok(true)
        }
        Command::Fit { data, model, out } => {
            let model = match model {
                Model::Decay => FitModel::Decay,
                Model::Inversion => FitModel::InversionRecovery,
            };
            let (report, _) = cli::cmd_fit(&data, model, &out)?;
            print!("{report}");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
