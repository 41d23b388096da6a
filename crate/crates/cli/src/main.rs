//! `edpc`: explicit model-based and data-driven predictive control from the
//! command line.
//!
//! Exit codes: 0 on success, 1 on numerical failure, 2 on invalid input.

mod commands;
mod export;
mod problem;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Error classes reported through the exit code.
#[derive(Debug)]
pub enum Failure {
    Validation(anyhow::Error),
    Numerical(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Numerical(_) => 1,
            Failure::Validation(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(e) => write!(f, "invalid input: {e:#}"),
            Failure::Numerical(e) => write!(f, "numerical failure: {e:#}"),
        }
    }
}

impl From<explicit_dpc::Error> for Failure {
    fn from(e: explicit_dpc::Error) -> Self {
        use explicit_dpc::Error as E;
        match e {
            E::Dimension(_)
            | E::InvalidInput(_)
            | E::InsufficientData(_)
            | E::ExcitationNotAchieved { .. }
            | E::Unobservable { .. } => Failure::Validation(e.into()),
            E::Numerical(_) | E::DegenerateReduction(_) | E::NotStrictlyConvex(_) | E::DomainExceeded { .. } => {
                Failure::Numerical(e.into())
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "edpc", version, about = "Explicit model-based and data-driven predictive control")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Relative singular-value threshold for numerical ranks.
    #[arg(long, global = true)]
    pub tol_rank: Option<f64>,
    /// Tolerance of the numeric QP solves.
    #[arg(long, global = true)]
    pub tol_opt: Option<f64>,
    /// Seed for generated data and sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Symmetric box half-widths of the parameter domain, comma separated.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub domain: Option<Vec<f64>>,
    /// Scalar multiple of the identity used as Phi.
    #[arg(long, global = true)]
    pub phi: Option<f64>,
    /// JSON file holding a kernel basis V_p as nested rows.
    #[arg(long, global = true)]
    pub vp_file: Option<PathBuf>,
    /// Run every batch on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ControllerKind {
    /// Explicit law in the state.
    Mpc,
    /// Explicit law in the past window.
    Dpc,
    /// Numeric QP in the state at every step.
    Numeric,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Report excitation and the ranks of the data matrices.
    CheckData { problem: PathBuf },
    /// Explicit model-based law over the state domain.
    MpcExplicit {
        problem: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Explicit data-driven law over the past-window domain.
    DpcExplicit {
        problem: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Solve both laws and compare them.
    Compare {
        problem: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Closed-loop run written as CSV.
    Simulate {
        problem: PathBuf,
        #[arg(long, value_enum, default_value_t = ControllerKind::Dpc)]
        controller: ControllerKind,
        /// Initial state, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x0: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate an exported solution at one parameter.
    Evaluate {
        solution: PathBuf,
        /// Parameter, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        theta: Vec<f64>,
    },
    /// Two-dimensional scalar example with recorded data.
    Example1 {
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Double integrator with generated data.
    Example2 {
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
