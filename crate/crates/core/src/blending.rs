//! The four blend methods and the reweighted dispatch between them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::sampling::{sample_conic_weights, BlendMethod, ConicWeights, RngStream};

/// Default guard added to both bases of the geometric blend.
pub const DEFAULT_GEOMETRIC_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskGranularity {
    /// One bit per pixel, shared across channels.
    PerPixel,
    /// One bit per channel element.
    PerElement,
}

/// Boolean selection mask; `true` takes the first image.
#[derive(Clone, Debug, PartialEq)]
pub struct BlendMask {
    granularity: MaskGranularity,
    shape: Shape,
    bits: Vec<bool>,
}

impl BlendMask {
    pub fn new(granularity: MaskGranularity, shape: Shape, bits: Vec<bool>) -> Result<Self> {
        let expected = match granularity {
            MaskGranularity::PerPixel => shape.0 * shape.1,
            MaskGranularity::PerElement => shape.0 * shape.1 * shape.2,
        };
        if bits.len() != expected {
            return Err(Error::Parameter(format!(
                "{granularity:?} mask for {shape:?} needs {expected} cells, got {}",
                bits.len()
            )));
        }
        Ok(Self { granularity, shape, bits })
    }

    pub fn filled(granularity: MaskGranularity, shape: Shape, value: bool) -> Self {
        let n = match granularity {
            MaskGranularity::PerPixel => shape.0 * shape.1,
            MaskGranularity::PerElement => shape.0 * shape.1 * shape.2,
        };
        Self { granularity, shape, bits: vec![value; n] }
    }

    pub fn granularity(&self) -> MaskGranularity {
        self.granularity
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Mask value at a flat element index of an image with this shape.
    #[inline]
    pub fn at_element(&self, index: usize) -> bool {
        match self.granularity {
            MaskGranularity::PerPixel => self.bits[index / self.shape.2],
            MaskGranularity::PerElement => self.bits[index],
        }
    }

    pub fn fraction_true(&self) -> f64 {
        self.bits.iter().filter(|&&b| b).count() as f64 / self.bits.len() as f64
    }
}

/// `a·z0 + b·z1`, clipped.
pub fn blend_arithmetic(z0: &Image, z1: &Image, w: ConicWeights) -> Result<Image> {
    z0.check_same_shape(z1)?;
    let data = z0
        .data()
        .iter()
        .zip(z1.data())
        .map(|(&x, &y)| (w.a * x as f64 + w.b * y as f64) as f32)
        .collect();
    Ok(Image::from_raw_clipped(z0.shape(), data))
}

/// `2^(a+b−1) · (z0+eps)^a · (z1+eps)^b`, clipped.
pub fn blend_geometric(z0: &Image, z1: &Image, w: ConicWeights, eps: f64) -> Result<Image> {
    z0.check_same_shape(z1)?;
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::Parameter(format!("geometric eps must be finite and >= 0, got {eps}")));
    }
    let scale = 2f64.powf(w.a + w.b - 1.0);
    let data = z0
        .data()
        .iter()
        .zip(z1.data())
        .map(|(&x, &y)| (scale * (x as f64 + eps).powf(w.a) * (y as f64 + eps).powf(w.b)) as f32)
        .collect();
    Ok(Image::from_raw_clipped(z0.shape(), data))
}

/// `M ⊙ z0 + (1 − M) ⊙ z1`.
pub fn blend_masked(z0: &Image, z1: &Image, mask: &BlendMask) -> Result<Image> {
    z0.check_same_shape(z1)?;
    if mask.shape() != z0.shape() {
        return Err(Error::ShapeMismatch {
            expected: z0.shape(),
            actual: mask.shape(),
        });
    }
    let data = z0
        .data()
        .iter()
        .zip(z1.data())
        .enumerate()
        .map(|(i, (&x, &y))| if mask.at_element(i) { x } else { y })
        .collect();
    Ok(Image::from_raw_clipped(z0.shape(), data))
}

/// Draws a mixing rate `λ ~ U(0,1)`, then sets each cell with probability `λ`.
pub fn sample_mask(rng: &mut RngStream, shape: Shape, granularity: MaskGranularity) -> BlendMask {
    let n = match granularity {
        MaskGranularity::PerPixel => shape.0 * shape.1,
        MaskGranularity::PerElement => shape.0 * shape.1 * shape.2,
    };
    let rate = rng.uniform();
    let bits = (0..n).map(|_| rng.bernoulli(rate)).collect();
    BlendMask { granularity, shape, bits }
}

/// Dispatches to `method`, sampling conic weights or a mask as needed.
pub fn blend(
    z0: &Image,
    z1: &Image,
    method: BlendMethod,
    rng: &mut RngStream,
    beta: f64,
    eps: f64,
) -> Result<Image> {
    z0.check_same_shape(z1)?;
    match method {
        BlendMethod::Arithmetic => blend_arithmetic(z0, z1, sample_conic_weights(rng, beta)?),
        BlendMethod::Geometric => blend_geometric(z0, z1, sample_conic_weights(rng, beta)?, eps),
        BlendMethod::PixelMix => {
            blend_masked(z0, z1, &sample_mask(rng, z0.shape(), MaskGranularity::PerPixel))
        }
        BlendMethod::ElementMix => {
            blend_masked(z0, z1, &sample_mask(rng, z0.shape(), MaskGranularity::PerElement))
        }
    }
}
