//! Float image container shared by transforms, blends and the fractal bank.

use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};

/// Luminance weights used for every grayscale conversion.
pub const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

/// `(height, width, channels)`.
pub type Shape = (usize, usize, usize);

/// Row-major `H × W × C` image with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!(
                "image must be non-empty, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "expected 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidImage(format!(
                "buffer holds {} values, shape {height}x{width}x{channels} needs {}",
                data.len(),
                height * width * channels
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!(
                "intensity {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value.clamp(0.0, 1.0); height * width * channels],
        }
    }

    /// Builds an image from a per-element function of `(y, x, c)`; results are clipped.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c).clamp(0.0, 1.0));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    /// Wraps a buffer whose values are clipped into `[0, 1]` rather than validated.
    pub(crate) fn from_raw_clipped(shape: Shape, mut data: Vec<f32>) -> Self {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self {
            height: shape.0,
            width: shape.1,
            channels: shape.2,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> Shape {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub(crate) fn pixel(&self, y: usize, x: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub(crate) fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                actual: other.shape(),
            });
        }
        Ok(())
    }

    pub(crate) fn map(&self, mut f: impl FnMut(f32) -> f32) -> Image {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Image::from_raw_clipped(self.shape(), data)
    }

    pub fn flip_horizontal(&self) -> Image {
        let mut out = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in (0..self.width).rev() {
                out.extend_from_slice(self.pixel(y, x));
            }
        }
        Image { data: out, ..*self }
    }

    pub fn flip_vertical(&self) -> Image {
        let row = self.width * self.channels;
        let mut out = Vec::with_capacity(self.data.len());
        for y in (0..self.height).rev() {
            out.extend_from_slice(&self.data[y * row..(y + 1) * row]);
        }
        Image { data: out, ..*self }
    }

    /// Luminance replicated across all channels. One-channel images are returned unchanged.
    pub fn to_grayscale(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let mut out = Vec::with_capacity(self.data.len());
        for px in self.data.chunks_exact(3) {
            let l = luminance(px);
            out.extend_from_slice(&[l, l, l]);
        }
        Image { data: out, ..*self }
    }

    /// Converts between one and three channels (luminance down, replication up).
    pub fn with_channels(&self, channels: usize) -> Image {
        match (self.channels, channels) {
            (a, b) if a == b => self.clone(),
            (1, 3) => {
                let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
                Image { height: self.height, width: self.width, channels: 3, data }
            }
            (3, 1) => {
                let data = self.data.chunks_exact(3).map(luminance).collect();
                Image { height: self.height, width: self.width, channels: 1, data }
            }
            _ => unreachable!("channel count is always 1 or 3"),
        }
    }

    /// Bilinear resize with half-pixel centers and edge clamping.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Image {
        if (height, width) == (self.height, self.width) {
            return self.clone();
        }
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        let c = self.channels;
        let mut out = Vec::with_capacity(height * width * c);
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f64;
                for ch in 0..c {
                    let top = self.get(y0, x0, ch) as f64 * (1.0 - wx) + self.get(y0, x1, ch) as f64 * wx;
                    let bot = self.get(y1, x0, ch) as f64 * (1.0 - wx) + self.get(y1, x1, ch) as f64 * wx;
                    out.push((top * (1.0 - wy) + bot * wy) as f32);
                }
            }
        }
        Image::from_raw_clipped((height, width, c), out)
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Image> {
        if top + height > self.height || left + width > self.width || height == 0 || width == 0 {
            return Err(Error::Parameter(format!(
                "crop {height}x{width} at ({top}, {left}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut out = Vec::with_capacity(height * width * self.channels);
        for y in top..top + height {
            let start = (y * self.width + left) * self.channels;
            out.extend_from_slice(&self.data[start..start + width * self.channels]);
        }
        Ok(Image { height, width, channels: self.channels, data: out })
    }

    pub fn from_dynamic(img: &DynamicImage) -> Image {
        let has_color = img.color().has_color();
        if has_color {
            let rgb = img.to_rgb32f();
            let (w, h) = rgb.dimensions();
            Image::from_raw_clipped((h as usize, w as usize, 3), rgb.into_raw())
        } else {
            let gray = img.to_luma32f();
            let (w, h) = gray.dimensions();
            Image::from_raw_clipped((h as usize, w as usize, 1), gray.into_raw())
        }
    }

    pub fn open(path: &Path) -> Result<Image> {
        let img = image::open(path).map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Ok(Image::from_dynamic(&img))
    }

    /// 8-bit quantization, `round(x * 255)`.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        let (w, h) = (self.width as u32, self.height as u32);
        let bytes = self.to_u8();
        if self.channels == 3 {
            DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).expect("buffer size matches shape"))
        } else {
            DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, bytes).expect("buffer size matches shape"))
        }
    }

    /// Writes an 8-bit PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_dynamic()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| match e {
                image::ImageError::IoError(io) => Error::io(format!("writing {}", path.display()), io),
                other => Error::InvalidImage(other.to_string()),
            })
    }
}

#[inline]
pub(crate) fn luminance(px: &[f32]) -> f32 {
    // The weights sum to one, so a gray pixel is its own luminance; returning
    // it directly keeps conversion idempotent in floating point.
    if px[0] == px[1] && px[1] == px[2] {
        return px[0];
    }
    (LUMA[0] * px[0] + LUMA[1] * px[1] + LUMA[2] * px[2]).clamp(0.0, 1.0)
}

#[inline]
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
