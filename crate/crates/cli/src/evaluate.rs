use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use layermix::metrics::{
    mean_corruption_error, mean_flip_probability, mean_top5_distance, normalized_corruption_error, read_jsonl,
    rms_calibration_error, DEFAULT_CALIBRATION_BINS,
};
use layermix::{FlipMode, PredictionRecord};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::augment::write_atomic;
use crate::exit::Failure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mce,
    Mfp,
    Mt5d,
    Rms,
    All,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Temporal,
    Noise,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EvaluateArgs {
    /// Prediction log, one JSON record per line
    #[arg(long, value_name = "FILE.jsonl")]
    pub log: PathBuf,
    #[arg(long, value_enum, default_value_t = Metric::All)]
    pub metric: Metric,
    /// Flip-probability variant: adjacent frames or each frame against the first
    #[arg(long, value_enum, default_value_t = Mode::Temporal)]
    pub mode: Mode,
    /// Equal-mass bins for the calibration error
    #[arg(long, value_name = "INT", default_value_t = DEFAULT_CALIBRATION_BINS)]
    pub bins: usize,
    /// Baseline log for normalized corruption error
    #[arg(long, value_name = "FILE")]
    pub baseline: Option<PathBuf>,
    /// Where to write the JSON results
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn load(path: &Path) -> Result<Vec<PredictionRecord>, Failure> {
    let file = File::open(path).map_err(|e| Failure::io(format!("opening {}", path.display()), e))?;
    read_jsonl(BufReader::new(file)).map_err(|e| match e {
        layermix::Error::Log { line, message } => {
            Failure::Usage(format!("{} line {line}: {message}", path.display()))
        }
        other => other.into(),
    })
}

fn grid_records(records: &[PredictionRecord]) -> Vec<PredictionRecord> {
    records
        .iter()
        .filter(|r| r.corruption.is_some() || r.severity.is_some())
        .cloned()
        .collect()
}

fn sequence_records(records: &[PredictionRecord]) -> Vec<PredictionRecord> {
    records.iter().filter(|r| r.sequence_id.is_some()).cloned().collect()
}

pub fn run(args: EvaluateArgs) -> Result<(), Failure> {
    let records = load(&args.log)?;
    let wants = |m: Metric| args.metric == m || args.metric == Metric::All;
    let explicit = args.metric != Metric::All;
    let mut results = Map::new();
    let mut rows: Vec<(String, f64)> = Vec::new();

    if wants(Metric::Mce) {
        let grid = grid_records(&records);
        if grid.is_empty() {
            if explicit {
                return Err(Failure::Usage("no records carry corruption and severity".into()));
            }
        } else {
            let mce = mean_corruption_error(&grid)?;
            results.insert("mce".into(), json!(mce));
            rows.push(("mCE".into(), mce));
            if let Some(path) = &args.baseline {
                let baseline = grid_records(&load(path)?);
                let norm = normalized_corruption_error(&grid, &baseline)?;
                results.insert("normalized_mce".into(), json!(norm));
                rows.push(("normalized mCE".into(), norm));
            }
        }
    }

    let sequences = sequence_records(&records);
    if (wants(Metric::Mfp) || wants(Metric::Mt5d)) && sequences.is_empty() && explicit {
        return Err(Failure::Usage("no records carry sequence_id and frame".into()));
    }
    if wants(Metric::Mfp) && !sequences.is_empty() {
        let mode = match args.mode {
            Mode::Temporal => FlipMode::Temporal,
            Mode::Noise => FlipMode::NoiseSequence,
        };
        let mfp = mean_flip_probability(&sequences, mode)?;
        results.insert("mfp".into(), json!({ "mode": args.mode, "value": mfp }));
        rows.push((format!("mFP ({:?})", args.mode).to_lowercase(), mfp));
    }
    if wants(Metric::Mt5d) && !sequences.is_empty() {
        let mt5d = mean_top5_distance(&sequences)?;
        results.insert("mt5d".into(), json!(mt5d));
        rows.push(("mT5D".into(), mt5d));
    }

    if wants(Metric::Rms) {
        if records.len() >= args.bins || explicit {
            let rms = rms_calibration_error(&records, args.bins)?;
            results.insert("rms_calibration_error".into(), json!({ "bins": args.bins, "value": rms }));
            rows.push((format!("RMS calibration ({} bins)", args.bins), rms));
        } else {
            log::warn!("skipping calibration: {} records cannot fill {} bins", records.len(), args.bins);
        }
    }

    println!("{:<28} {:>12}", "metric", "value");
    for (name, value) in &rows {
        println!("{name:<28} {value:>12.6}");
    }
    println!("{} records from {}", records.len(), args.log.display());

    if let Some(out) = &args.out {
        let doc = json!({
            "log": args.log,
            "records": records.len(),
            "metrics": Value::Object(results),
        });
        write_atomic(out, &serde_json::to_vec_pretty(&doc).expect("results serialize"))?;
    }
    Ok(())
}
