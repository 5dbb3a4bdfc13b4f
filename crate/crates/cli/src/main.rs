//! `spoc`: run, compare and check sequential propagation-of-chaos experiments.

mod commands;
mod config;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spoc_core::SpocError;

#[derive(Parser, Debug)]
#[command(name = "spoc", version, about = "Sequential propagation-of-chaos experiments")]
struct Cli {
    /// More log output (SPOC_LOG takes precedence).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override a configuration entry, e.g. `model.params.beta=2` (repeatable).
    #[arg(long = "set", value_name = "KEY=VAL")]
    pub overrides: Vec<String>,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Override the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodArg {
    Spoc,
    BatchSpoc,
    ClassicalPoc,
    CoupledSpoc,
    Reference,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F64,
    F32,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one method and write a run directory.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = MethodArg::Spoc)]
        method: MethodArg,
        #[arg(long, value_enum, default_value_t = Precision::F64)]
        precision: Precision,
        /// Continue an incomplete run in `--out` from its saved states.
        #[arg(long)]
        resume: bool,
    },
    /// SPoC and classical PoC on the same milestones.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        milestones: Option<String>,
        #[arg(long, default_value = "mean")]
        metric: String,
    },
    /// Convergence table, rate fit and log-log plot.
    Rates {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        milestones: Option<String>,
        #[arg(long, default_value = "w2_to_reference")]
        metric: String,
        #[arg(long, value_enum, default_value_t = MethodArg::Spoc)]
        method: MethodArg,
    },
    /// Histogram of a one-dimensional measure with the reference overlaid.
    Density {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 40)]
        bins: usize,
        /// `LO,HI`; defaults to the data range.
        #[arg(long)]
        range: Option<String>,
        /// Particle count to read (default N).
        #[arg(long)]
        milestone: Option<usize>,
    },
    /// Tail diagnostics of an update-rate schedule.
    ScheduleDiag {
        #[command(flatten)]
        common: Common,
        /// Schedule as JSON, e.g. `{"kind":"power_law","r":0.7}`; defaults to
        /// the config's schedule.
        #[arg(long)]
        schedule: Option<String>,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        /// Tail window (0 = 10% of n).
        #[arg(long, default_value_t = 0)]
        window: usize,
    },
    /// Run the invariant battery; exit 0 iff everything passes.
    Verify {
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let env = env_logger::Env::new().filter_or("SPOC_LOG", default);
    let _ = env_logger::Builder::from_env(env).try_init();
}

fn exit_code(e: &SpocError) -> u8 {
    if e.is_numeric_blowup() {
        3
    } else if e.is_config() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let res = match cli.command {
        Command::Simulate {
            common,
            method,
            precision,
            resume,
        } => match precision {
            Precision::F64 => commands::simulate::<f64>(&common, method, resume),
            Precision::F32 => commands::simulate::<f32>(&common, method, resume),
        },
        Command::Compare {
            common,
            milestones,
            metric,
        } => commands::compare(&common, milestones.as_deref(), &metric),
        Command::Rates {
            common,
            milestones,
            metric,
            method,
        } => commands::rates(&common, milestones.as_deref(), &metric, method),
        Command::Density {
            common,
            bins,
            range,
            milestone,
        } => commands::density(&common, bins, range.as_deref(), milestone),
        Command::ScheduleDiag {
            common,
            schedule,
            n,
            gamma,
            window,
        } => commands::schedule_diag(&common, schedule.as_deref(), n, gamma, window),
        Command::Verify { workers } => {
            return if verify::run(workers.unwrap_or(0)) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
