//! Label-preserving image transformations driven by a shared magnitude knob.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{quantize, Image};
use crate::sampling::RngStream;

/// Upper bound of the magnitude knob.
pub const MAX_MAGNITUDE: u8 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Equalize,
    Grayscale,
    AutoContrast,
    Brightness,
    Posterize,
    Solarize,
    Rotate,
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
}

impl TransformKind {
    pub const ALL: [TransformKind; 11] = [
        TransformKind::Equalize,
        TransformKind::Grayscale,
        TransformKind::AutoContrast,
        TransformKind::Brightness,
        TransformKind::Posterize,
        TransformKind::Solarize,
        TransformKind::Rotate,
        TransformKind::ShearX,
        TransformKind::ShearY,
        TransformKind::TranslateX,
        TransformKind::TranslateY,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::Equalize => "equalize",
            TransformKind::Grayscale => "grayscale",
            TransformKind::AutoContrast => "auto_contrast",
            TransformKind::Brightness => "brightness",
            TransformKind::Posterize => "posterize",
            TransformKind::Solarize => "solarize",
            TransformKind::Rotate => "rotate",
            TransformKind::ShearX => "shear_x",
            TransformKind::ShearY => "shear_y",
            TransformKind::TranslateX => "translate_x",
            TransformKind::TranslateY => "translate_y",
        }
    }

    pub fn descriptor(self) -> TransformDescriptor {
        use TransformKind::*;
        let (magnitude_range, signed) = match self {
            Equalize | Grayscale | AutoContrast => (None, false),
            Brightness => (Some((0.1, 1.9)), true),
            Posterize => (Some((0.0, 4.0)), false),
            Solarize => (Some((0.0, 1.0)), false),
            Rotate => (Some((-30.0, 30.0)), true),
            ShearX | ShearY => (Some((-0.3, 0.3)), true),
            TranslateX | TranslateY => (Some((0.0, 0.33)), true),
        };
        TransformDescriptor {
            kind: self,
            magnitude_range,
            signed,
        }
    }

    pub fn is_geometric(self) -> bool {
        use TransformKind::*;
        matches!(self, Rotate | ShearX | ShearY | TranslateX | TranslateY)
    }
}

/// A transform together with its table range.
///
/// `magnitude_range` is `None` for the parameter-free kinds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformDescriptor {
    pub kind: TransformKind,
    pub magnitude_range: Option<(f64, f64)>,
    pub signed: bool,
}

impl TransformDescriptor {
    pub fn is_parameterized(&self) -> bool {
        self.magnitude_range.is_some()
    }

    /// Largest absolute level reachable at magnitude 10.
    ///
    /// Brightness levels are deviations of the factor from one, so its
    /// ceiling is 0.9 even though the factor range is 0.1..1.9.
    pub fn level_max(&self) -> f64 {
        match self.kind {
            TransformKind::Brightness => 0.9,
            _ => self
                .magnitude_range
                .map(|(lo, hi)| lo.abs().max(hi.abs()))
                .unwrap_or(0.0),
        }
    }
}

/// Uniform pick over the eleven transforms.
pub fn sample_transform(rng: &mut RngStream) -> TransformDescriptor {
    sample_transform_from(rng, &TransformKind::ALL)
}

/// Uniform pick over a caller-supplied, nonempty set of kinds.
pub fn sample_transform_from(rng: &mut RngStream, kinds: &[TransformKind]) -> TransformDescriptor {
    kinds[rng.index(kinds.len())].descriptor()
}

pub fn check_magnitude(magnitude: u8) -> Result<()> {
    if magnitude > MAX_MAGNITUDE {
        return Err(Error::Parameter(format!(
            "magnitude must be in 0..={MAX_MAGNITUDE}, got {magnitude}"
        )));
    }
    Ok(())
}

/// Draws the effective level: uniform on `[0, (m/10)·level_max]`, negated
/// with probability ½ for signed kinds. Parameter-free kinds return 0 without
/// consuming randomness.
pub fn sample_level(desc: &TransformDescriptor, magnitude: u8, rng: &mut RngStream) -> Result<f64> {
    check_magnitude(magnitude)?;
    if !desc.is_parameterized() {
        return Ok(0.0);
    }
    let ceiling = magnitude as f64 / MAX_MAGNITUDE as f64 * desc.level_max();
    let level = rng.uniform() * ceiling;
    let negate = desc.signed && rng.bernoulli(0.5);
    Ok(if negate { -level } else { level })
}

/// Samples a level and applies the transform.
pub fn apply_transform(
    img: &Image,
    desc: &TransformDescriptor,
    magnitude: u8,
    rng: &mut RngStream,
) -> Result<Image> {
    apply_transform_traced(img, desc, magnitude, rng).map(|(out, _)| out)
}

/// As [`apply_transform`], also returning the sampled level.
pub fn apply_transform_traced(
    img: &Image,
    desc: &TransformDescriptor,
    magnitude: u8,
    rng: &mut RngStream,
) -> Result<(Image, f64)> {
    let level = sample_level(desc, magnitude, rng)?;
    Ok((apply_with_level(img, desc.kind, level), level))
}

/// Applies a transform at a fixed level. Level 0 is the identity for every
/// parameterized kind.
pub fn apply_with_level(img: &Image, kind: TransformKind, level: f64) -> Image {
    use TransformKind::*;
    match kind {
        Equalize => equalize(img),
        Grayscale => img.to_grayscale(),
        AutoContrast => autocontrast(img),
        _ if level == 0.0 => img.clone(),
        Brightness => {
            let factor = (1.0 + level) as f32;
            img.map(|v| v * factor)
        }
        Posterize => posterize(img, level.abs().round() as u32),
        Solarize => {
            let threshold = (1.0 - level.abs()) as f32;
            img.map(|v| if v >= threshold { 1.0 - v } else { v })
        }
        Rotate => {
            let (s, c) = level.to_radians().sin_cos();
            warp_affine(img, [c, -s, s, c], [0.0, 0.0])
        }
        ShearX => warp_affine(img, [1.0, -level, 0.0, 1.0], [0.0, 0.0]),
        ShearY => warp_affine(img, [1.0, 0.0, -level, 1.0], [0.0, 0.0]),
        TranslateX => warp_affine(img, [1.0, 0.0, 0.0, 1.0], [-level * img.width() as f64, 0.0]),
        TranslateY => warp_affine(img, [1.0, 0.0, 0.0, 1.0], [0.0, -level * img.height() as f64]),
    }
}

/// Keeps `8 - bits_removed` bits of the 8-bit quantized intensity.
fn posterize(img: &Image, bits_removed: u32) -> Image {
    if bits_removed == 0 {
        return img.clone();
    }
    let mask = 0xFFu8 << bits_removed.min(8);
    img.map(|v| (quantize(v) & mask) as f32 / 255.0)
}

/// Per-channel histogram equalization on 8-bit levels.
fn equalize(img: &Image) -> Image {
    let c = img.channels();
    let q = img.to_u8();
    let mut luts = Vec::with_capacity(c);
    for ch in 0..c {
        let mut hist = [0usize; 256];
        for px in q.chunks_exact(c) {
            hist[px[ch] as usize] += 1;
        }
        luts.push(equalize_lut(&hist));
    }
    let data = q
        .iter()
        .enumerate()
        .map(|(i, &v)| match &luts[i % c] {
            Some(lut) => lut[v as usize] as f32 / 255.0,
            None => img.data()[i],
        })
        .collect();
    Image::from_raw_clipped(img.shape(), data)
}

/// Cumulative-histogram lookup table; `None` leaves the channel untouched.
fn equalize_lut(hist: &[usize; 256]) -> Option<[u8; 256]> {
    let total: usize = hist.iter().sum();
    let last = hist.iter().rposition(|&h| h > 0)?;
    let step = (total - hist[last]) / 255;
    if step == 0 {
        return None;
    }
    let mut lut = [0u8; 256];
    let mut n = step / 2;
    for (i, &h) in hist.iter().enumerate() {
        lut[i] = (n / step).min(255) as u8;
        n += h;
    }
    Some(lut)
}

/// Stretches each channel to span `[0, 1]`. Flat channels are left alone.
fn autocontrast(img: &Image) -> Image {
    let c = img.channels();
    let mut lo = vec![f32::INFINITY; c];
    let mut hi = vec![f32::NEG_INFINITY; c];
    for px in img.data().chunks_exact(c) {
        for ch in 0..c {
            lo[ch] = lo[ch].min(px[ch]);
            hi[ch] = hi[ch].max(px[ch]);
        }
    }
    let data = img
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let ch = i % c;
            if hi[ch] > lo[ch] {
                (v - lo[ch]) / (hi[ch] - lo[ch])
            } else {
                v
            }
        })
        .collect();
    Image::from_raw_clipped(img.shape(), data)
}

/// Inverse-mapped affine warp about the image center.
///
/// `inv` is the row-major 2×2 matrix taking output offsets from the center to
/// source offsets; `shift` is subtracted from the output position first.
/// Sampling is bilinear with zeros outside the canvas.
fn warp_affine(img: &Image, inv: [f64; 4], shift: [f64; 2]) -> Image {
    let (h, w, c) = img.shape();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut out = vec![0.0f32; h * w * c];
    let mut acc = vec![0.0f64; c];
    for y in 0..h {
        for x in 0..w {
            let u = x as f64 - cx + shift[0];
            let v = y as f64 - cy + shift[1];
            let sx = inv[0] * u + inv[1] * v + cx;
            let sy = inv[2] * u + inv[3] * v + cy;
            sample_bilinear_zero(img, sx, sy, &mut acc);
            let base = (y * w + x) * c;
            for ch in 0..c {
                out[base + ch] = acc[ch] as f32;
            }
        }
    }
    Image::from_raw_clipped(img.shape(), out)
}

fn sample_bilinear_zero(img: &Image, sx: f64, sy: f64, acc: &mut [f64]) {
    acc.iter_mut().for_each(|a| *a = 0.0);
    let (h, w, _) = img.shape();
    if !(sx > -1.0 && sy > -1.0 && sx < w as f64 && sy < h as f64) {
        return;
    }
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let corners = [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x0 + 1.0, y0, fx * (1.0 - fy)),
        (x0, y0 + 1.0, (1.0 - fx) * fy),
        (x0 + 1.0, y0 + 1.0, fx * fy),
    ];
    for (px, py, wgt) in corners {
        if wgt == 0.0 || px < 0.0 || py < 0.0 || px >= w as f64 || py >= h as f64 {
            continue;
        }
        let p = img.pixel(py as usize, px as usize);
        for (a, &v) in acc.iter_mut().zip(p) {
            *a += wgt * v as f64;
        }
    }
}
