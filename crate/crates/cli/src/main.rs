//! `evcharge`: equilibrium, fluid, social-optimum and simulation runs from a
//! JSON configuration, written as CSV tables.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::ConfigError;

#[derive(Debug, Parser)]
#[command(name = "evcharge", version, about = "Selfish EV charging-station choice: equilibrium, dynamics and simulation")]
pub struct Cli {
    /// Directory receiving the CSV outputs.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Run every kernel on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Equilibrium delays, occupancies and optimality certificate.
    SolveEq(ConfigArg),
    /// Integrate the fluid dynamics and check the dual along the path.
    SimulateFluid(FluidArgs),
    /// Planner's optimal routing.
    SocialOpt(ConfigArg),
    /// Selfish vs. optimal social cost over a range of total demand.
    PoaSweep(SweepArgs),
    /// Equilibrium under delay-sensitive demand.
    SolveElastic(ConfigArg),
    /// Discrete-event simulation with hard-min station choice.
    SimulateStochastic(StochasticArgs),
    /// Voronoi and attraction-region rasters.
    Regions(RegionArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct FluidArgs {
    pub config: PathBuf,
    /// `zeros`, `equilibrium`, or a JSON file holding an array of occupancies.
    #[arg(long, default_value = "zeros")]
    pub q0: String,
    /// Minutes; defaults to the config's ode block, else 40 T.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Minutes; defaults to the config's ode block, else T/600.
    #[arg(long)]
    pub step: Option<f64>,
    /// Record every this many steps.
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub r_from: f64,
    #[arg(long)]
    pub r_to: f64,
    #[arg(long)]
    pub r_steps: usize,
}

#[derive(Debug, Args)]
pub struct StochasticArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Minutes.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Minutes.
    #[arg(long)]
    pub warmup: Option<f64>,
    /// Snapshot spacing, minutes.
    #[arg(long)]
    pub stride: Option<f64>,
    /// Also solve the fluid equilibrium and report deviations from it.
    #[arg(long)]
    pub with_equilibrium: bool,
}

#[derive(Debug, Clone, ValueEnum)]
pub enum MuSource {
    FromEquilibrium,
    Zero,
}

#[derive(Debug, Args)]
pub struct RegionArgs {
    pub config: PathBuf,
    #[arg(long, value_enum, default_value = "from-equilibrium")]
    pub mu: MuSource,
}

/// Single-line JSON error on stderr.
fn report(kind: &str, message: &str) {
    let line = serde_json::json!({ "error": kind, "message": message.replace('\n', " ") });
    eprintln!("{line}");
}

fn classify(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return "config";
        }
        if let Some(e) = cause.downcast_ref::<evcharge::Error>() {
            return match e {
                evcharge::Error::NotConverged { .. } => "not_converged",
                evcharge::Error::Integration { .. } => "integration",
                _ => "compute",
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<csv::Error>() {
            return "io";
        }
    }
    "internal"
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            let text = e.to_string();
            report("usage", text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = classify(&e);
            report(kind, &format!("{e:#}"));
            ExitCode::from(if kind == "config" { 2 } else { 1 })
        }
    }
}
