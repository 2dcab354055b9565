//! `mobgame`: scenario-driven runs of the assignment, operator equilibrium,
//! dataset, surrogate and policy optimization stages.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "mobgame", version, about = "Hierarchical mobility game solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    /// Scenario file (JSON).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Master seed; defaults to the scenario's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Write wall-clock timings (makes outputs run-dependent).
    #[arg(long)]
    pub record_time: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvaluatorKind {
    Exact,
    Surrogate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Feedback,
    Ga,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Traveler equilibrium at the scenario's initial operator strategies.
    Assign {
        #[command(flatten)]
        common: Common,
        /// Relative gap tolerance.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Operator equilibrium under the scenario's initial policy.
    Mne {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        /// Steps per operator per round.
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Operator equilibria at sampled policies.
    Dataset {
        #[command(flatten)]
        common: Common,
        /// Number of samples.
        #[arg(long)]
        n: Option<usize>,
        /// Keep samples already present in the output dataset.
        #[arg(long)]
        resume: bool,
    },
    /// Fit the equilibrium surrogate to a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Fraction of samples (highest ids) held out for validation.
        #[arg(long, default_value_t = 0.2)]
        holdout: f64,
    },
    /// Policy search.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "feedback")]
        method: MethodArg,
        #[arg(long, value_enum, default_value = "exact")]
        evaluator: EvaluatorKind,
        /// Trained surrogate (required with `--evaluator surrogate`).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Objective evaluations.
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        /// Feedback iterations; defaults to half the budget.
        #[arg(long)]
        iters: Option<usize>,
    },
}

/// Exit status 1 for bad inputs, 2 for solver failures or unconverged
/// results (outputs are still written).
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Solver(String),
}

impl Failure {
    pub fn input(msg: impl Into<String>) -> Self {
        Failure::Input(msg.into())
    }

    pub fn solver(msg: impl Into<String>) -> Self {
        Failure::Solver(msg.into())
    }
}

impl From<mobgame::Error> for Failure {
    fn from(e: mobgame::Error) -> Self {
        match e {
            mobgame::Error::Evaluation(_) | mobgame::Error::PathCapExceeded { .. } => Failure::Solver(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Assign {
            common,
            epsilon,
            max_iter,
        } => commands::assign(&common, epsilon, max_iter),
        Command::Mne {
            common,
            eta,
            delta,
            iters,
            rounds,
        } => commands::mne(&common, eta, delta, iters, rounds),
        Command::Dataset { common, n, resume } => commands::dataset(&common, n, resume),
        Command::Train {
            common,
            dataset,
            holdout,
        } => commands::train(&common, &dataset, holdout),
        Command::Optimize {
            common,
            method,
            evaluator,
            model,
            budget,
            eta,
            delta,
            iters,
        } => commands::optimize(
            &common,
            &commands::OptimizeArgs {
                method,
                evaluator,
                model,
                budget,
                eta,
                delta,
                iters,
            },
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver: {msg}");
            ExitCode::from(2)
        }
    }
}
