//! The bank of mixing pictures and how a single picture is served.

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::sampling::RngStream;

const EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CachePolicy {
    /// Decode everything once at load time.
    #[default]
    LoadAll,
    /// Decode on every serve.
    Lazy,
}

#[derive(Clone, Debug)]
enum Storage {
    Loaded(Vec<Image>),
    Lazy(Vec<PathBuf>),
}

/// Immutable set of mixing pictures.
#[derive(Clone, Debug)]
pub struct FractalBank {
    root: PathBuf,
    entries: Vec<PathBuf>,
    grayscale: bool,
    storage: Storage,
    skipped: Vec<PathBuf>,
}

/// Every PNG/JPEG under `root`, as sorted paths relative to it.
pub fn discover_images(root: &Path) -> Result<Vec<PathBuf>> {
    if !root.is_dir() {
        return Err(Error::io(
            format!("reading fractal directory {}", root.display()),
            std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        ));
    }
    let mut found = Vec::new();
    for entry in WalkDir::new(root).follow_links(true) {
        let entry = entry.map_err(|e| {
            let context = format!("walking {}", root.display());
            match e.into_io_error() {
                Some(io) => Error::io(context, io),
                None => Error::io(context, std::io::Error::other("filesystem loop")),
            }
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let ext = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if ext.is_some_and(|e| EXTENSIONS.contains(&e.as_str())) {
            let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
            found.push(rel.to_path_buf());
        }
    }
    found.sort();
    Ok(found)
}

/// Reads a manifest: one relative path per line, `#` starts a comment line.
pub fn read_manifest(path: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading manifest {}", path.display()), e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(PathBuf::from)
        .collect())
}

impl FractalBank {
    /// Loads every decodable image under `root`, eagerly.
    pub fn load(root: &Path, grayscale: bool) -> Result<Self> {
        Self::load_with(root, grayscale, CachePolicy::LoadAll, None)
    }

    /// Loads a bank, optionally pinning entry order with a manifest.
    /// Files that fail to decode are skipped with a warning.
    pub fn load_with(
        root: &Path,
        grayscale: bool,
        policy: CachePolicy,
        manifest: Option<&Path>,
    ) -> Result<Self> {
        let candidates = match manifest {
            Some(m) => read_manifest(m)?,
            None => discover_images(root)?,
        };
        let mut entries = Vec::new();
        let mut images = Vec::new();
        let mut skipped = Vec::new();
        for rel in candidates {
            let full = root.join(&rel);
            let ok = match policy {
                CachePolicy::LoadAll => match Image::open(&full) {
                    Ok(img) => {
                        images.push(if grayscale { img.to_grayscale() } else { img });
                        true
                    }
                    Err(e) => {
                        warn!("skipping fractal: {e}");
                        false
                    }
                },
                CachePolicy::Lazy => match image::ImageReader::open(&full)
                    .and_then(|r| r.with_guessed_format())
                    .map_err(|e| e.to_string())
                    .and_then(|r| r.into_dimensions().map_err(|e| e.to_string()))
                {
                    Ok(_) => true,
                    Err(reason) => {
                        warn!("skipping fractal {}: {reason}", full.display());
                        false
                    }
                },
            };
            if ok {
                entries.push(rel);
            } else {
                skipped.push(rel);
            }
        }
        if entries.is_empty() {
            return Err(Error::EmptyBank { path: root.to_path_buf() });
        }
        let storage = match policy {
            CachePolicy::LoadAll => Storage::Loaded(images),
            CachePolicy::Lazy => Storage::Lazy(entries.iter().map(|p| root.join(p)).collect()),
        };
        Ok(Self {
            root: root.to_path_buf(),
            entries,
            grayscale,
            storage,
            skipped,
        })
    }

    /// Builds a bank from in-memory pictures.
    pub fn from_images(images: Vec<Image>, grayscale: bool) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::EmptyBank { path: PathBuf::from("<memory>") });
        }
        let entries = (0..images.len()).map(|i| PathBuf::from(format!("<memory>/{i}"))).collect();
        let images = if grayscale {
            images.iter().map(Image::to_grayscale).collect()
        } else {
            images
        };
        Ok(Self {
            root: PathBuf::from("<memory>"),
            entries,
            grayscale,
            storage: Storage::Loaded(images),
            skipped: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> &[PathBuf] {
        &self.entries
    }

    /// Files that were present but could not be decoded.
    pub fn skipped(&self) -> &[PathBuf] {
        &self.skipped
    }

    pub fn count(&self) -> usize {
        self.entries.len()
    }

    pub fn is_grayscale(&self) -> bool {
        self.grayscale
    }

    pub fn cache_policy(&self) -> CachePolicy {
        match self.storage {
            Storage::Loaded(_) => CachePolicy::LoadAll,
            Storage::Lazy(_) => CachePolicy::Lazy,
        }
    }

    /// The stored picture at `index`, grayscale-converted if the bank is.
    pub fn get(&self, index: usize) -> Result<Image> {
        match &self.storage {
            Storage::Loaded(images) => Ok(images[index].clone()),
            Storage::Lazy(paths) => {
                let img = Image::open(&paths[index])?;
                Ok(if self.grayscale { img.to_grayscale() } else { img })
            }
        }
    }

    /// Picks an entry uniformly, flips it on each axis with probability ½,
    /// resizes so it covers `target`, then crops `target` at a uniform offset.
    pub fn sample(&self, rng: &mut RngStream, target: Shape) -> Result<Image> {
        let draw = FractalDraw::sample(rng, self.count());
        let img = self.get(draw.index)?;
        serve(&img, &draw, rng, target)
    }
}

/// The random choices made before the crop offset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FractalDraw {
    pub index: usize,
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
}

impl FractalDraw {
    pub fn sample(rng: &mut RngStream, count: usize) -> Self {
        let index = rng.index(count);
        let flip_horizontal = rng.bernoulli(0.5);
        let flip_vertical = rng.bernoulli(0.5);
        Self { index, flip_horizontal, flip_vertical }
    }
}

/// Flip, resize to cover, and crop one picture. Draws the crop offset from `rng`.
pub fn serve(img: &Image, draw: &FractalDraw, rng: &mut RngStream, target: Shape) -> Result<Image> {
    let (th, tw, tc) = target;
    if th == 0 || tw == 0 || (tc != 1 && tc != 3) {
        return Err(Error::Parameter(format!("invalid target shape {target:?}")));
    }
    let mut out = img.with_channels(tc);
    if draw.flip_horizontal {
        out = out.flip_horizontal();
    }
    if draw.flip_vertical {
        out = out.flip_vertical();
    }
    let scale = (th as f64 / out.height() as f64).max(tw as f64 / out.width() as f64);
    let rh = ((out.height() as f64 * scale).round() as usize).max(th);
    let rw = ((out.width() as f64 * scale).round() as usize).max(tw);
    let resized = out.resize_bilinear(rh, rw);
    let top = rng.index(rh - th + 1);
    let left = rng.index(rw - tw + 1);
    resized.crop(top, left, th, tw)
}

/// Convenience wrapper over [`FractalBank::sample`].
pub fn sample_fractal(bank: &FractalBank, rng: &mut RngStream, target: Shape) -> Result<Image> {
    bank.sample(rng, target)
}
