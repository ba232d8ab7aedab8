//! `cramer`: distributional policy evaluation under the Cramér metric.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "cramer",
    version,
    about = "Distributional policy evaluation under the Cramér metric"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Iterate the distributional Bellman operator to its fixed point.
    Evaluate(EvaluateArgs),
    /// Run the property checks and write report.json.
    Verify(VerifyArgs),
    /// Regularised spectral distances along a decreasing epsilon list.
    Sweep(SweepArgs),
    /// Describe a model, or list the bundled ones.
    Info(InfoArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackendArg {
    Atomic,
    Grid,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Model file, or the name of a bundled model.
    #[arg(long)]
    mdp: PathBuf,
    /// Policy file or `uniform`; defaults to the model's own policy.
    #[arg(long)]
    policy: Option<String>,
    /// Override the model's discount.
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "atomic")]
    backend: BackendArg,
    /// Merge atoms closer than this after every update; 0 keeps updates exact.
    #[arg(long, default_value_t = 0.0)]
    merge_delta: f64,
    /// Project onto this many nodes after every update (atomic backend).
    #[arg(long)]
    lattice: Option<usize>,
    /// Grid backend node count.
    #[arg(long, default_value_t = 2001)]
    grid_nodes: usize,
    /// Stop once the Banach bound is at most this.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Check this model only; all bundled models when absent.
    #[arg(long)]
    mdp: Option<PathBuf>,
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Monte Carlo rollouts per state-action pair; 0 skips that check.
    #[arg(long, default_value_t = 100_000)]
    mc_samples: usize,
    /// Override a tolerance, as `name=value`. Repeatable.
    #[arg(long = "tolerance", value_name = "NAME=VALUE")]
    tolerances: Vec<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// First law: `delta:X`, `bernoulli:LO,HI,P`, or a distribution file.
    #[arg(long, default_value = "delta:0")]
    p1: String,
    #[arg(long, default_value = "delta:1")]
    p2: String,
    /// Sweep every entry of two field files instead of a single pair.
    #[arg(long, num_args = 2, value_names = ["FIELD1", "FIELD2"], conflicts_with_all = ["p1", "p2"])]
    fields: Option<Vec<PathBuf>>,
    /// Comma-separated, strictly decreasing.
    #[arg(long)]
    eps_list: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct InfoArgs {
    #[arg(long)]
    mdp: Option<PathBuf>,
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Verify(a) => commands::verify(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Info(a) => commands::info(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
