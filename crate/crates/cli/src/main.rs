//! `utilmax`: batch front end for the portfolio-selection toolkit.
//!
//! Exit codes: 0 all checks pass, 1 a check failed (or a solver gave up),
//! 2 bad input, 3 the market admits arbitrage.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use utilmax_core::Error;

#[derive(Debug, Parser)]
#[command(name = "utilmax", version, about = "Expected-utility portfolio selection on finite scenario trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Market file (JSON scenario tree).
    #[arg(long, global = true)]
    pub market: Option<PathBuf>,
    /// Utility spec, e.g. `exp:gamma=1`, `trunclin:bliss=1`, `quad`.
    #[arg(long, global = true)]
    pub utility: Option<String>,
    /// Initial wealth.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub wealth: Option<f64>,
    /// Absolute and relative value tolerance.
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve primal and dual, and certify the pair.
    Solve,
    /// Solve the dual problem only (cold start).
    Dual,
    /// Run every applicable check on a prior report or a fresh solve.
    Verify {
        /// Report written by `solve`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Martingale constraints and vertex measures of the market.
    Polytope,
    /// Generalized entropy `E[V(y dQ/dP)]` for given measures.
    Entropy {
        #[arg(long, default_value_t = 1.0)]
        y: f64,
        /// Terminal probabilities of `Q`, comma separated; defaults to every vertex.
        #[arg(long)]
        measure: Option<String>,
    },
    /// Luxemburg norm of a weighted sample (`value[,weight]` per line).
    Norm {
        #[arg(long)]
        samples: PathBuf,
        /// `power:p=2`, `cosh`, `indicator`, or `induced` (uses `--utility`).
        #[arg(long)]
        young: String,
    },
    /// Localizing integrand for a path sample.
    Localize {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        young: String,
        /// Nested predictable sets in order: `all`, `max=K` or `upto=M`.
        #[arg(long = "set", required = true)]
        sets: Vec<String>,
    },
    /// Moment condition on the large jumps of a Lévy measure.
    LevyCheck {
        /// `dexp:intensity=1,p_up=0.5,eta=2`, `gauss:intensity=1,mean=0,sd=1` or `stable:alpha=1.5,scale=1`.
        #[arg(long)]
        family: String,
        /// `exp=LAMBDA` or `power=P`.
        #[arg(long, allow_hyphen_values = true)]
        moment: String,
    },
    /// Value functions over a wealth grid as CSV (`x,u_primal,u_dual,y_hat`).
    Curves {
        #[arg(long, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, allow_hyphen_values = true)]
        to: f64,
        #[arg(long)]
        step: f64,
    },
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Arbitrage(_) => 3,
        Error::Domain(_)
        | Error::UtilitySpec { .. }
        | Error::InvalidMarket(_)
        | Error::InvalidSample(_)
        | Error::DimensionOverflow { .. }
        | Error::Io(_)
        | Error::Json(_) => 2,
        Error::NoFiniteEntropy(_)
        | Error::NonConvergence { .. }
        | Error::LineSearch(_)
        | Error::Unbounded { .. }
        | Error::Lp(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
