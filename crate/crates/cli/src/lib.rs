//! `dirichlet-reg`: config-driven experiments on sampled càdlàg paths.
//!
//! Every command resolves its config (all defaults explicit), writes its
//! outputs plus a `manifest.json`, and exits with a stable code:
//! 0 pass, 2 config error, 3 estimator non-convergence, 4 statistical failure.
//! `replay` re-runs a manifest and exits 0 only if every output is bit-identical.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod manifest;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_STATISTICAL: i32 = 4;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "DIRICHLET_REG_OUT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Failed(String),
}

impl From<dirichlet_reg_core::Error> for CliError {
    fn from(e: dirichlet_reg_core::Error) -> Self {
        use dirichlet_reg_core::Error as E;
        match e {
            E::Io(io) => CliError::Io(io),
            E::Precondition(msg) => CliError::Failed(msg),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dirichlet-reg", version, about = "Regularization-based stochastic calculus experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an ensemble and write one CSV per path.
    Simulate(RunArgs),
    /// ε-family of [X,X] (or [X,Y]) with the continuous/jump split.
    Qv(RunArgs),
    /// ε-family of the forward integral ∫Y d⁻X.
    Fwdint(RunArgs),
    /// Martingale-problem residual test on a simulated ensemble.
    Residual(RunArgs),
    /// Path decomposition and the B^k bracket identities.
    Decompose(RunArgs),
    /// Recover (b, c, Λ) from samples of the exponent.
    Recover(RunArgs),
    /// Long-format table across ε and Δt for convergence plots.
    Sweep(RunArgs),
    /// Re-run a manifest and compare every output byte for byte.
    Replay(ReplayArgs),
    /// Print the config JSON schema.
    Schema,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Output directory (default: config `output_dir`, then $DIRICHLET_REG_OUT, then ./dirichlet-reg-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; outputs do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// exptanh | dampedsine | bump | tanh
    #[arg(long)]
    pub function: Option<String>,
    #[arg(long)]
    pub alpha_se: Option<f64>,
    /// Add `rate · t` to every residual (negative control).
    #[arg(long)]
    pub inject_drift: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where to write the re-run (default: `replay/` next to the manifest).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Run a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let threads = match &cli.command {
        Command::Replay(a) => a.threads,
        Command::Schema => None,
        Command::Simulate(a)
        | Command::Qv(a)
        | Command::Fwdint(a)
        | Command::Residual(a)
        | Command::Decompose(a)
        | Command::Recover(a)
        | Command::Sweep(a) => a.threads,
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    match pool.install(|| commands::dispatch(&cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
