use std::fs;
use std::path::PathBuf;

use clap::Args;
use layermix::fractal::discover_images;
use layermix::Image;
use serde::Serialize;

use crate::augment::write_atomic;
use crate::exit::Failure;

#[derive(Args, Debug, Clone, Serialize)]
pub struct FractalPrepArgs {
    /// Directory of fractal images (png, jpg)
    #[arg(long, value_name = "DIR")]
    pub input: PathBuf,
    /// Directory for the grayscale PNGs
    #[arg(long, value_name = "DIR")]
    pub output: PathBuf,
    /// Manifest listing the outputs in load order
    #[arg(long, value_name = "PATH")]
    pub manifest: PathBuf,
}

pub fn run(args: FractalPrepArgs) -> Result<(), Failure> {
    let found = discover_images(&args.input)?;
    fs::create_dir_all(&args.output).map_err(|e| Failure::io(format!("creating {}", args.output.display()), e))?;
    let mut written = Vec::new();
    let mut skipped = 0usize;
    for rel in &found {
        let img = match Image::open(&args.input.join(rel)) {
            Ok(img) => img,
            Err(e) => {
                log::warn!("skipping {}: {e}", rel.display());
                skipped += 1;
                continue;
            }
        };
        let out_rel = rel.with_extension("png");
        let out_path = args.output.join(&out_rel);
        if let Some(parent) = out_path.parent() {
            fs::create_dir_all(parent).map_err(|e| Failure::io(format!("creating {}", parent.display()), e))?;
        }
        img.with_channels(1).save_png(&out_path)?;
        written.push(out_rel);
    }
    if written.is_empty() {
        return Err(Failure::EmptyBank(format!(
            "no decodable images under {} ({skipped} skipped)",
            args.input.display()
        )));
    }
    let mut text = String::new();
    for rel in &written {
        text.push_str(&rel.to_string_lossy());
        text.push('\n');
    }
    text.push_str(&format!("# skipped: {skipped}\n"));
    write_atomic(&args.manifest, text.as_bytes())?;
    println!("wrote {} grayscale fractals, skipped {skipped}", written.len());
    Ok(())
}
