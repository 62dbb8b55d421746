//! `cuthmm`: simulate data, fit cut posteriors and run diagnostics from a TOML config.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cuthmm_cli::commands;
use cuthmm_cli::config::{ExperimentConfig, Scale};
use cuthmm_cli::error::CliError;
use cuthmm_cli::run::{Clock, Run};

#[derive(Parser)]
#[command(name = "cuthmm", version, about = "Cut-posterior inference for hidden Markov models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment config; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root; overrides outputs.directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; overrides data.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent (n, kappa) cells.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Divide MCMC run lengths: smoke 100x, desk 10x, full 1x.
    #[arg(long, global = true, value_enum)]
    scale: Option<Scale>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate the study data set (or import data.input).
    Simulate,
    /// Histogram-prior posterior for Q on every (n, M) grid cell.
    FitQ,
    /// Cut-posterior emission densities from stored Q draws.
    FitEmissions,
    /// Fully Bayesian DPM-emission HMM for comparison.
    FitFull,
    /// Spectral moment estimate of Q and the bin probabilities.
    Spectral,
    /// Bin-count heuristic, Fisher monotonicity and BvM checks.
    Diagnose,
    /// Run every stage in order.
    ReproducePaper,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::FitQ => "fit-q",
            Command::FitEmissions => "fit-emissions",
            Command::FitFull => "fit-full",
            Command::Spectral => "spectral",
            Command::Diagnose => "diagnose",
            Command::ReproducePaper => "reproduce-paper",
        }
    }

    fn stage(self, run: &Run) -> Result<Vec<PathBuf>, CliError> {
        match self {
            Command::Simulate => commands::simulate(run),
            Command::FitQ => commands::fit_q(run),
            Command::FitEmissions => commands::fit_emissions(run),
            Command::FitFull => commands::fit_full(run),
            Command::Spectral => commands::spectral(run),
            Command::Diagnose => commands::diagnose(run),
            Command::ReproducePaper => unreachable!("not a single stage"),
        }
    }
}

const PIPELINE: [Command; 6] =
    [Command::Simulate, Command::FitQ, Command::FitEmissions, Command::FitFull, Command::Spectral, Command::Diagnose];

fn execute(cli: &Cli) -> Result<PathBuf, CliError> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.data.seed = seed;
    }
    let scale = match (cli.scale, cli.command) {
        (None, Command::ReproducePaper) => Some(Scale::Desk),
        (s, _) => s,
    };
    if let Some(s) = scale {
        config = config.scaled(s);
    }
    config.validate()?;
    let out = cli.out.clone().unwrap_or_else(|| config.outputs.directory.clone());
    let run = Run::new(config, &out, scale, cli.jobs);
    run.prepare()?;

    let clock = Clock::start();
    let artifacts = match cli.command {
        Command::ReproducePaper => {
            let mut all = Vec::new();
            for stage in PIPELINE {
                let started = Clock::start();
                eprintln!("[{}] {}", run.config.run_id(), stage.name());
                let produced = stage.stage(&run)?;
                all.push(run.write_manifest(stage.name(), &started, &produced)?);
                all.extend(produced);
            }
            all
        }
        command => command.stage(&run)?,
    };
    run.write_manifest(cli.command.name(), &clock, &artifacts)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("cuthmm {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
