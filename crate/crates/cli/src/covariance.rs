use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use layermix::covariance::covariance_report;
use layermix::{Generator, RngStream, TransformStats};
use serde::Serialize;

use crate::augment::{positive_f64, write_atomic};
use crate::exit::Failure;

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    Layermix,
    Iid,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CovarianceArgs {
    /// JSON file with per-transform moments: {"transforms": [{"mu": [..], "sigma": [..], "mixture_prob": p}, ..]}
    #[arg(long, value_name = "FILE")]
    pub stats: PathBuf,
    #[arg(long, value_enum, default_value_t = PipelineKind::Layermix)]
    pub pipeline: PipelineKind,
    /// Monte-Carlo trials
    #[arg(long, value_name = "INT", default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(2..))]
    pub n: u64,
    /// Where to write the JSON report
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Largest accepted |analytic - empirical| entry
    #[arg(long, value_name = "FLOAT", default_value_t = 0.02, value_parser = positive_f64)]
    pub tol: f64,
    #[arg(long, value_name = "INT", default_value_t = 0)]
    pub seed: u64,
}

fn print_matrix(label: &str, m: &[Vec<f64>]) {
    println!("{label}:");
    for row in m {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>10.5}")).collect();
        println!("  [{}]", cells.join(" "));
    }
}

pub fn run(args: CovarianceArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.stats)
        .map_err(|e| Failure::io(format!("reading {}", args.stats.display()), e))?;
    let stats: TransformStats = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("malformed stats file {}: {e}", args.stats.display())))?;
    stats
        .validate()
        .map_err(|e| Failure::Usage(format!("malformed stats file {}: {e}", args.stats.display())))?;
    let generator = match args.pipeline {
        PipelineKind::Layermix => Generator::Layermix,
        PipelineKind::Iid => Generator::Iid,
    };
    let mut rng = RngStream::new(args.seed, 0);
    let report = covariance_report(generator, &stats, args.n as usize, &mut rng)?;

    print_matrix("analytic", &report.analytic);
    print_matrix("empirical", &report.empirical);
    println!(
        "pipeline {:?}, n = {}, max |analytic - empirical| = {:.6} (tol {})",
        args.pipeline, report.n_samples, report.max_abs_deviation, args.tol
    );
    if let Some(out) = &args.out {
        let json = serde_json::to_vec_pretty(&report).expect("report serializes");
        write_atomic(out, &json)?;
    }
    if report.max_abs_deviation < args.tol {
        println!("PASS");
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "max deviation {:.6} is not below tolerance {}",
            report.max_abs_deviation, args.tol
        )))
    }
}
