//! `actihist`: clean, summarize, fit, compare, infer and simulate.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use actihist::Error;
use clap::{Args, Parser, Subcommand};

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "actihist", version, about = "Histogram functional regression for minute-epoch activity counts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel steps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Zero runs longer than this many minutes are non-wear.
    #[arg(long, global = true)]
    zero_block: Option<usize>,
    /// Number of equal-width bins below the upper edge (the tail bin comes on top).
    #[arg(long, global = true)]
    bins: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Apply the wear and validity rules to raw profiles.
    Clean,
    /// Build 1D, hour-of-day and weekday/weekend histograms from cleaned profiles.
    Summarize,
    /// Fit every configured model by REML.
    Fit,
    /// Model-selection table on a train/validation split.
    Compare,
    /// Credible bands, scenario percentage changes and the nonlinearity test.
    Infer,
    /// Write a synthetic cohort with known truth.
    Simulate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Clean => "clean",
            Command::Summarize => "summarize",
            Command::Fit => "fit",
            Command::Compare => "compare",
            Command::Infer => "infer",
            Command::Simulate => "simulate",
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. }
        | Error::Conflict { .. }
        | Error::Io { .. }
        | Error::Csv(_)
        | Error::InvalidInput(_)
        | Error::OutsideDomain { .. }
        | Error::GridMismatch(_) => 2,
        Error::EmptyCohort(_) => 3,
        Error::RankDeficient { .. } | Error::NonFinite { .. } | Error::NotPsd { .. } | Error::OptimizerFailed(_) => 4,
        Error::Config(_) | Error::Json(_) => 5,
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let c = &cli.common;
    let overrides = Overrides {
        seed: c.seed,
        threads: c.threads,
        zero_block: c.zero_block,
        bins: c.bins,
        out: c.out.clone(),
    };
    let cfg = RunConfig::load(c.config.as_deref(), &overrides)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    commands::echo_config(&cfg, cli.command.name())?;
    match cli.command {
        Command::Clean => commands::clean(&cfg),
        Command::Summarize => commands::summarize(&cfg),
        Command::Fit => commands::fit(&cfg),
        Command::Compare => commands::compare(&cfg),
        Command::Infer => commands::infer(&cfg),
        Command::Simulate => commands::simulate(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
