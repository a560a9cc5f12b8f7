mod augment;
mod config;
mod covariance;
mod evaluate;
mod exit;
mod fractal_prep;
mod selfcheck;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::exit::Failure;

#[derive(Parser, Debug)]
#[command(name = "layermix", version, about = "Fractal-mixing augmentation, self-checks and robustness metrics")]
#[command(args_override_self = true)]
pub struct Cli {
    /// TOML file whose keys mirror the command flags; flags given on the
    /// command line take precedence
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Augment every image in a directory
    Augment(augment::AugmentArgs),
    /// Check the sampling distributions against their expected laws
    Selfcheck(selfcheck::SelfcheckArgs),
    /// Compare analytic and Monte-Carlo auto-covariance
    Covariance(covariance::CovarianceArgs),
    /// Compute robustness and calibration metrics from a prediction log
    Evaluate(evaluate::EvaluateArgs),
    /// Convert a fractal directory to grayscale and pin its order
    FractalPrep(fractal_prep::FractalPrepArgs),
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Augment(args) => augment::run(args),
        Command::Selfcheck(args) => selfcheck::run(args),
        Command::Covariance(args) => covariance::run(args),
        Command::Evaluate(args) => evaluate::run(args),
        Command::FractalPrep(args) => fractal_prep::run(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = match config::parse_with_config(&argv) {
        Ok(cli) => cli,
        Err(failure) => return failure.report(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => failure.report(),
    }
}
