//! `sncm` — command-line front end for the skew-normal censored mixture
//! regression library.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error.

mod commands;
mod config;
mod ingest;
mod manifest;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "sncm",
    version,
    about = "Bayesian variable selection for censored mixture responses",
    disable_help_subcommand = true
)]
struct Cli {
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
    /// Path to a TOML run-configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker-pool size override (0 = one worker per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate replicate datasets from a named simulation scenario.
    Simulate {
        /// Scenario name (baseline, high_variance, high_censoring,
        /// high_skewness, misspecified_R, lognormal_errors,
        /// correlated_predictors, large_n).
        #[arg(long)]
        scenario: String,
        /// Number of replicate datasets.
        #[arg(long, default_value_t = 50)]
        replicates: usize,
    },
    /// Build a relationship matrix from a predictor hierarchy.
    BuildRel {
        /// JSON hierarchy file; omit to emit the built-in block design.
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        /// Number of 20-predictor blocks for the built-in design.
        #[arg(long, default_value_t = 15)]
        blocks: usize,
    },
    /// Tune the MRF interaction strength from the prior alone.
    TuneEta {
        /// Relationship matrix CSV.
        #[arg(long)]
        rel: PathBuf,
        /// Prior inclusion probability defining omega0.
        #[arg(long, default_value_t = 0.02)]
        inclusion_probability: f64,
        /// Candidate grid: "unit" ({0.01..1.00}) or "scaled" (divided by
        /// the largest matrix entry).
        #[arg(long, default_value = "unit")]
        grid: String,
    },
    /// Fit the model to every response column declared in the config.
    Fit,
    /// Aggregate ELPD model-comparison estimates across fitted models.
    Evaluate {
        /// Fit output directories (each containing draws.json).
        #[arg(long = "fit", required = true)]
        fits: Vec<PathBuf>,
    },
    /// Score selection results against a simulation truth sidecar.
    Score {
        /// Truth CSV written by `simulate` (index, gamma, beta).
        #[arg(long)]
        truth: PathBuf,
        /// One selection.csv per replicate.
        #[arg(long = "selection", required = true)]
        selections: Vec<PathBuf>,
        /// Scenario label stamped on the metrics row.
        #[arg(long, default_value = "unknown")]
        scenario: String,
        /// Prior label stamped on the metrics row.
        #[arg(long, default_value = "unknown")]
        prior: String,
    },
    /// Draw from the posterior predictive of a fitted model.
    Predict {
        /// Fit output directory for one response (contains draws.json).
        #[arg(long)]
        fit: PathBuf,
        /// Response column the fit directory corresponds to.
        #[arg(long)]
        response: String,
        /// Number of predictive draws.
        #[arg(long, default_value_t = 200)]
        draws: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => config::RunConfig::from_file(path)?,
        None => config::RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.mcmc.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }

    if cli.print_config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }

    let Some(command) = cli.command else {
        // No subcommand and no --print-config: a usage error; clap's own
        // missing-subcommand path is bypassed because the flag makes the
        // subcommand optional.
        clap::Error::raw(
            clap::error::ErrorKind::MissingSubcommand,
            "a subcommand is required unless --print-config is given\n",
        )
        .exit();
    };

    match command {
        Command::Simulate {
            scenario,
            replicates,
        } => commands::simulate(&cfg, &scenario, replicates),
        Command::BuildRel { hierarchy, blocks } => {
            commands::build_rel(&cfg, hierarchy.as_deref(), blocks)
        }
        Command::TuneEta {
            rel,
            inclusion_probability,
            grid,
        } => commands::tune_eta(&cfg, &rel, inclusion_probability, &grid),
        Command::Fit => commands::fit(&cfg),
        Command::Evaluate { fits } => commands::evaluate(&cfg, &fits),
        Command::Score {
            truth,
            selections,
            scenario,
            prior,
        } => commands::score(&cfg, &truth, &selections, &scenario, &prior),
        Command::Predict {
            fit,
            response,
            draws,
        } => commands::predict(&cfg, &fit, &response, draws),
    }
}
