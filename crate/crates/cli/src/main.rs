//! `survtest` — command-line surface for two-sample survival testing:
//! run tests on sample files, generate simulated datasets, calibrate
//! censoring, train and calibrate classifiers, and produce power, rank
//! and envelope reports.
//!
//! Exit codes follow a pipeline-friendly convention: `0` the test accepts
//! H0 (or a non-test command succeeded), `3` the test rejects H0, and
//! codes above 3 identify error categories.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use survtest_core::Error;

#[derive(Parser)]
#[command(name = "survtest", version, about = "Two-sample tests under right censoring")]
struct Cli {
    /// Worker threads for simulation; output bytes never depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one two-sample test on a pair of sample CSV files.
    Test(TestArgs),
    /// Generate a dataset of statistics and p-values over a design grid.
    Simulate(SimulateArgs),
    /// Calibrate a censoring law to a target censoring rate.
    Calibrate(CalibrateArgs),
    /// Train a classifier on a simulated dataset.
    Train(TrainArgs),
    /// Build an empirical null table for a statistic or a model.
    Nulltable(NulltableArgs),
    /// Estimate rejection rates by fresh simulation or from a dataset.
    Power(PowerArgs),
    /// Rank methods in a power table by AVG, Wald and Savage criteria.
    Rank(RankArgs),
    /// Build a null-distribution envelope across H0 configurations.
    Envelope(EnvelopeArgs),
    /// Permutation feature importance of a trained model on a dataset.
    Importance(ImportanceArgs),
}

#[derive(Args, Serialize)]
struct TestArgs {
    /// First sample CSV (header `time,censored`; censored 1 = censored).
    sample1: PathBuf,
    /// Second sample CSV.
    sample2: PathBuf,
    /// Test method name (e.g. logrank, gehan, max_test).
    #[arg(long, conflicts_with = "model")]
    method: Option<String>,
    /// Trained model JSON; runs the ML test (requires --null-table).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Significance level; H0 is rejected when p < alpha.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Empirical null table JSON (required for max_test, min3 and models).
    #[arg(long)]
    null_table: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    /// Comma-separated alternative ids, or "all" for the full registry.
    #[arg(long, default_value = "all")]
    alternatives: String,
    /// Per-group sample sizes.
    #[arg(long, value_delimiter = ',', default_value = "20,100")]
    sizes: Vec<usize>,
    /// Target censoring rates.
    #[arg(long, value_delimiter = ',', default_value = "0,0.3")]
    rates: Vec<f64>,
    /// Replications per design cell and hypothesis.
    #[arg(long, default_value_t = 50)]
    replications: usize,
    /// Master seed; all randomness derives from it.
    #[arg(long)]
    seed: u64,
    /// Output dataset CSV; the manifest lands next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct CalibrateArgs {
    /// Failure law to calibrate against (e.g. "We(0,2,0.5)").
    #[arg(long, conflicts_with = "alt")]
    dist: Option<String>,
    /// Registered alternative id; calibrates both of its laws.
    #[arg(long)]
    alt: Option<String>,
    /// Target censoring rate in [0, 0.5].
    #[arg(long)]
    rate: f64,
    /// Censoring family (Exp, We, G, LgN).
    #[arg(long, default_value = "Exp")]
    family: String,
    /// Shape parameter of the censoring family, where it has one.
    #[arg(long, default_value_t = 1.0)]
    shape: f64,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Dataset CSV produced by `simulate`.
    #[arg(long)]
    dataset: PathBuf,
    /// Classifier kind.
    #[arg(long, value_parser = ["logreg", "gbt"])]
    model_kind: String,
    /// Output model JSON.
    #[arg(long)]
    out: PathBuf,
    /// Fraction of rows held out for evaluation (metrics in metadata).
    #[arg(long)]
    holdout: Option<f64>,
    /// Shuffle seed for the holdout split; required with --holdout.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Serialize)]
struct NulltableArgs {
    /// Statistic to tabulate (e.g. max_test, min3).
    #[arg(long, conflicts_with = "model")]
    method: Option<String>,
    /// Trained model JSON to tabulate instead of a classical statistic.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Per-group sample size of the H0 configuration.
    #[arg(long)]
    n: usize,
    /// Target censoring rate of the H0 configuration.
    #[arg(long)]
    rate: f64,
    /// Simulated H0 replications (at least 1000).
    #[arg(long, default_value_t = 10_000)]
    replications: usize,
    /// Failure law simulated under H0.
    #[arg(long, default_value = "Exp(0,1)")]
    law: String,
    /// Master seed.
    #[arg(long)]
    seed: u64,
    /// Output table JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct PowerArgs {
    /// Dataset CSV; switches to dataset mode (otherwise fresh simulation).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Method names; dataset mode accepts several, simulation mode one.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Empirical null table JSON; repeat for several tables.
    #[arg(long)]
    null_table: Vec<PathBuf>,
    /// Trained model JSON to evaluate alongside the methods.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Model null table JSON; repeat for several tables.
    #[arg(long)]
    model_table: Vec<PathBuf>,
    /// Significance levels.
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    alphas: Vec<f64>,
    /// Hypothesis the rows or draws come from (H0 = size, H1 = power).
    #[arg(long, default_value = "H1")]
    hypothesis: String,
    /// Output power CSV (dataset mode) or estimate JSON (simulation mode).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Alternative id (simulation mode).
    #[arg(long)]
    alt: Option<String>,
    /// Per-group sample size (simulation mode).
    #[arg(long)]
    n: Option<usize>,
    /// Target censoring rate (simulation mode).
    #[arg(long)]
    rate: Option<f64>,
    /// Fresh replications (simulation mode).
    #[arg(long)]
    replications: Option<usize>,
    /// Master seed (simulation mode).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Serialize)]
struct RankArgs {
    /// Power table CSV produced by `power`.
    #[arg(long)]
    power: PathBuf,
    /// Savage regret units: rank or power.
    #[arg(long, default_value = "rank", value_parser = ["rank", "power"])]
    savage_mode: String,
    /// Output report JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct EnvelopeArgs {
    /// Classical statistic to envelope.
    #[arg(long, conflicts_with = "model")]
    method: Option<String>,
    /// Trained model JSON to envelope instead.
    #[arg(long)]
    model: Option<PathBuf>,
    /// H0 cell as "law:n:rate" (e.g. "Exp(0,1):20:0"); repeat, at least two.
    #[arg(long = "cell")]
    cells: Vec<String>,
    /// Simulated replications per cell.
    #[arg(long, default_value_t = 10_000)]
    replications: usize,
    /// Master seed.
    #[arg(long)]
    seed: u64,
    /// Output report JSON.
    #[arg(long)]
    out: PathBuf,
    /// Optional plot-friendly CSV of the three envelope curves.
    #[arg(long)]
    plot_csv: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct ImportanceArgs {
    /// Trained model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Dataset CSV whose rows are scored.
    #[arg(long)]
    dataset: PathBuf,
    /// Permutation repeats per feature (at least 3).
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Shuffle seed.
    #[arg(long)]
    seed: u64,
    /// Output report JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// What a finished command means for the process exit code.
enum Outcome {
    /// Non-test command completed (exit 0).
    Done,
    /// The test accepted H0 (exit 0).
    Accept,
    /// The test rejected H0 (exit 3).
    Reject,
}

/// Stable mapping from error categories to exit codes above 3.
fn exit_code(err: &Error) -> u8 {
    match err.category() {
        "invalid-input" => 4,
        "parse" => 5,
        "numeric" => 6,
        "degenerate" => 7,
        "calibration" => 8,
        "table-required" => 9,
        "table-quality" => 10,
        "incompatible-model" => 11,
        "training" => 12,
        "metric" => 13,
        "incomplete" => 14,
        "io" => 15,
        "json" => 16,
        _ => 17,
    }
}

fn run(command: Command) -> survtest_core::Result<Outcome> {
    match command {
        Command::Test(args) => commands::cmd_test(&args),
        Command::Simulate(args) => commands::cmd_simulate(&args),
        Command::Calibrate(args) => commands::cmd_calibrate(&args),
        Command::Train(args) => commands::cmd_train(&args),
        Command::Nulltable(args) => commands::cmd_nulltable(&args),
        Command::Power(args) => commands::cmd_power(&args),
        Command::Rank(args) => commands::cmd_rank(&args),
        Command::Envelope(args) => commands::cmd_envelope(&args),
        Command::Importance(args) => commands::cmd_importance(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 4,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    if let Some(workers) = cli.workers {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
        if let Err(err) = pool {
            eprintln!("error[invalid-input]: worker pool: {err}");
            return ExitCode::from(4);
        }
    }
    match run(cli.command) {
        Ok(Outcome::Done) | Ok(Outcome::Accept) => ExitCode::SUCCESS,
        Ok(Outcome::Reject) => ExitCode::from(3),
        Err(err) => {
            eprintln!("error[{}]: {err}", err.category());
            ExitCode::from(exit_code(&err))
        }
    }
}
