use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Args;
use layermix::fractal::discover_images;
use layermix::pipeline::layermix_layers;
use layermix::{layermix, FractalBank, Image, PipelineConfig, RngStream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::exit::Failure;

#[derive(Args, Debug, Clone, Serialize)]
pub struct AugmentArgs {
    /// Directory of input images (png, jpg)
    #[arg(long, value_name = "DIR", required_unless_present = "replay")]
    pub input: Option<PathBuf>,
    /// Directory for augmented images and manifest.json
    #[arg(long, value_name = "DIR", required_unless_present = "replay")]
    pub output: Option<PathBuf>,
    /// Directory of fractal images to mix in
    #[arg(long, value_name = "DIR", required_unless_present = "replay")]
    pub fractals: Option<PathBuf>,
    /// Transform magnitude
    #[arg(long, value_name = "INT", default_value_t = 8, value_parser = clap::value_parser!(u8).range(0..=10))]
    pub magnitude: u8,
    /// Blending ratio of the conic weights
    #[arg(long, value_name = "FLOAT", default_value_t = 3.0, value_parser = positive_f64)]
    pub beta: f64,
    #[arg(long, value_name = "INT", default_value_t = 0)]
    pub seed: u64,
    /// Convert fractals to grayscale before mixing
    #[arg(long, value_name = "BOOL", default_value_t = true, action = clap::ArgAction::Set)]
    pub grayscale_fractals: bool,
    /// Augmented copies written per input image
    #[arg(long, value_name = "INT", default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub count_per_image: u32,
    /// Also write an original | layer 1 | layer 2 | layer 3 strip for the first input
    #[arg(long, value_name = "PATH")]
    pub preview_grid: Option<PathBuf>,
    /// Rerun from a manifest.json and verify the outputs match its checksums
    #[arg(long, value_name = "MANIFEST", conflicts_with_all = ["input", "fractals", "magnitude", "beta", "seed", "grayscale_fractals", "count_per_image"])]
    pub replay: Option<PathBuf>,
}

pub fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be a positive number, got {v}"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FileEntry {
    pub input: PathBuf,
    pub output: PathBuf,
    pub stream_id: u64,
    pub exit_layer: u8,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Counters {
    pub inputs: usize,
    pub outputs: usize,
    pub fractals_loaded: usize,
    pub fractals_skipped: usize,
    pub exit_layers: [usize; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub count_per_image: u32,
    pub config: PipelineConfig,
    pub input: PathBuf,
    pub output: PathBuf,
    pub fractals: PathBuf,
    pub preview_grid: Option<PathBuf>,
    pub started_unix_secs: u64,
    pub wall_clock_secs: f64,
    pub counters: Counters,
    pub files: Vec<FileEntry>,
}

struct Plan {
    input: PathBuf,
    output: PathBuf,
    fractals: PathBuf,
    cfg: PipelineConfig,
    count: u32,
    preview: Option<PathBuf>,
    expected: Option<Vec<FileEntry>>,
}

fn plan(args: AugmentArgs) -> Result<Plan, Failure> {
    if let Some(path) = &args.replay {
        let text = fs::read_to_string(path).map_err(|e| Failure::io(format!("reading {}", path.display()), e))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("manifest {}: {e}", path.display())))?;
        return Ok(Plan {
            input: m.input,
            output: args.output.unwrap_or(m.output),
            fractals: m.fractals,
            cfg: m.config,
            count: m.count_per_image,
            preview: args.preview_grid.or(m.preview_grid),
            expected: Some(m.files),
        });
    }
    let cfg = PipelineConfig {
        magnitude: args.magnitude,
        blending_ratio: args.beta,
        grayscale_fractals: args.grayscale_fractals,
        seed: args.seed,
        ..PipelineConfig::default()
    };
    Ok(Plan {
        input: args.input.expect("required by clap"),
        output: args.output.expect("required by clap"),
        fractals: args.fractals.expect("required by clap"),
        cfg,
        count: args.count_per_image,
        preview: args.preview_grid,
        expected: None,
    })
}

fn output_name(rel: &Path, k: u32) -> PathBuf {
    let stem = rel.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    rel.with_file_name(format!("{stem}__aug{k}.png"))
}

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::io(format!("reading {}", path.display()), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| Failure::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| Failure::io(format!("renaming to {}", path.display()), e))
}

fn preview_strip(original: &Image, layers: &[Image; 3]) -> Image {
    let (h, w, _) = original.shape();
    let panels: Vec<Image> =
        std::iter::once(original).chain(layers.iter()).map(|p| p.with_channels(3)).collect();
    Image::from_fn(h, 4 * w, 3, |y, x, c| panels[x / w].get(y, x % w, c))
}

pub fn run(args: AugmentArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let started_unix_secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let plan = plan(args)?;
    plan.cfg.validate()?;

    let bank = FractalBank::load(&plan.fractals, plan.cfg.grayscale_fractals)?;
    let inputs = discover_images(&plan.input)?;
    fs::create_dir_all(&plan.output).map_err(|e| Failure::io(format!("creating {}", plan.output.display()), e))?;

    let per_image: Vec<Result<Vec<FileEntry>, Failure>> = inputs
        .par_iter()
        .enumerate()
        .map(|(i, rel)| -> Result<Vec<FileEntry>, Failure> {
            let img = Image::open(&plan.input.join(rel))?;
            let mut entries = Vec::with_capacity(plan.count as usize);
            for k in 0..plan.count {
                let stream_id = i as u64 * plan.count as u64 + k as u64;
                let mut rng = RngStream::new(plan.cfg.seed, stream_id);
                let sample = layermix(&img, &bank, &plan.cfg, &mut rng)?;
                let out_rel = output_name(rel, k);
                let out_path = plan.output.join(&out_rel);
                if let Some(parent) = out_path.parent() {
                    fs::create_dir_all(parent).map_err(|e| Failure::io(format!("creating {}", parent.display()), e))?;
                }
                sample.image.save_png(&out_path)?;
                entries.push(FileEntry {
                    input: rel.clone(),
                    output: out_rel,
                    stream_id,
                    exit_layer: sample.exit_layer,
                    sha256: sha256_file(&out_path)?,
                });
            }
            Ok(entries)
        })
        .collect();
    let mut files = Vec::with_capacity(inputs.len() * plan.count as usize);
    for entries in per_image {
        files.extend(entries?);
    }
    debug_assert_eq!(files.len(), inputs.len() * plan.count as usize);

    if let (Some(path), Some(first)) = (&plan.preview, inputs.first()) {
        let img = Image::open(&plan.input.join(first))?;
        let mut rng = RngStream::new(plan.cfg.seed, 0);
        let (_, layers) = layermix_layers(&img, &bank, &plan.cfg, &mut rng)?;
        preview_strip(&img, &layers).save_png(path)?;
    }

    let mut exit_layers = [0usize; 3];
    for f in &files {
        exit_layers[f.exit_layer as usize] += 1;
    }
    let manifest = Manifest {
        tool: "layermix".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "augment".into(),
        seed: plan.cfg.seed,
        count_per_image: plan.count,
        config: plan.cfg.clone(),
        input: plan.input.clone(),
        output: plan.output.clone(),
        fractals: plan.fractals.clone(),
        preview_grid: plan.preview.clone(),
        started_unix_secs,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        counters: Counters {
            inputs: inputs.len(),
            outputs: files.len(),
            fractals_loaded: bank.count(),
            fractals_skipped: bank.skipped().len(),
            exit_layers,
        },
        files,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&plan.output.join("manifest.json"), &json)?;
    println!(
        "augmented {} images into {} outputs (exit layers {:?}) in {:.2}s",
        manifest.counters.inputs,
        manifest.counters.outputs,
        exit_layers,
        manifest.wall_clock_secs
    );

    if let Some(expected) = plan.expected {
        let mismatched: Vec<_> = expected
            .iter()
            .filter(|e| !manifest.files.iter().any(|f| f.output == e.output && f.sha256 == e.sha256))
            .map(|e| e.output.display().to_string())
            .collect();
        if !mismatched.is_empty() || expected.len() != manifest.files.len() {
            return Err(Failure::Check(format!(
                "replay differs from manifest: {} of {} files mismatched ({})",
                mismatched.len(),
                expected.len(),
                mismatched.join(", ")
            )));
        }
        println!("replay matches manifest checksums for {} files", expected.len());
    }
    Ok(())
}
