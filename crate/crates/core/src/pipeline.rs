//! Layered augmentation: correlated augmentation stages separated by
//! independent blends, with a fractal injected before the last stage.
//!
//! One call draws an exit layer in `{0, 1, 2}` and one transform kind. The
//! kind is reused by every augmentation stage of the call; only its level is
//! redrawn per stage. Layer 0 is the transformed input, layer 1 blends two
//! independently leveled copies of it, and layer 2 blends layer 1 with a
//! fractal and transforms the result once more.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blending::{blend, DEFAULT_GEOMETRIC_EPS};
use crate::error::{Error, Result};
use crate::fractal::FractalBank;
use crate::image::Image;
use crate::sampling::{
    choose_blend_method, choose_layer_exit, validate_blend_weights, BlendMethod, BlendMethodId,
    RngStream,
};
use crate::transforms::{
    apply_transform_traced, check_magnitude, sample_transform_from, TransformDescriptor, TransformKind,
};

pub const DEFAULT_MAGNITUDE: u8 = 8;
pub const DEFAULT_BLENDING_RATIO: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub magnitude: u8,
    pub blending_ratio: f64,
    /// Probabilities for arithmetic, geometric, pixel and element blending.
    pub blend_probabilities: [f64; 4],
    pub grayscale_fractals: bool,
    pub seed: u64,
    pub eps_geometric: f64,
    /// Transform kinds the augmentation stages draw from.
    pub transforms: Vec<TransformKind>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            magnitude: DEFAULT_MAGNITUDE,
            blending_ratio: DEFAULT_BLENDING_RATIO,
            blend_probabilities: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
            grayscale_fractals: true,
            seed: 0,
            eps_geometric: DEFAULT_GEOMETRIC_EPS,
            transforms: TransformKind::ALL.to_vec(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        check_magnitude(self.magnitude)?;
        if !(self.blending_ratio > 0.0) || !self.blending_ratio.is_finite() {
            return Err(Error::Parameter(format!(
                "blending ratio must be positive, got {}",
                self.blending_ratio
            )));
        }
        if !(self.eps_geometric >= 0.0) || !self.eps_geometric.is_finite() {
            return Err(Error::Parameter(format!(
                "geometric eps must be nonnegative, got {}",
                self.eps_geometric
            )));
        }
        if self.transforms.is_empty() {
            return Err(Error::Parameter("transform set is empty".into()));
        }
        validate_blend_weights(&self.blend_weights())
    }

    pub fn blend_weights(&self) -> Vec<BlendMethodId> {
        BlendMethod::ALL
            .iter()
            .zip(self.blend_probabilities)
            .map(|(&tag, probability)| BlendMethodId { tag, probability })
            .collect()
    }
}

/// How augmentation stages pick their transform kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageCoupling {
    /// One kind per call, shared by every stage.
    Shared,
    /// A fresh kind per stage.
    Independent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Stage {
    Augment { kind: TransformKind, level: f64 },
    Blend { method: BlendMethod },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSample {
    pub image: Image,
    pub exit_layer: u8,
    /// Kind drawn for the first augmentation stage.
    pub transform_kind: TransformKind,
    pub blend_trace: Vec<BlendMethod>,
    /// Every stage in execution order, up to the exit layer.
    pub stages: Vec<Stage>,
    pub fractal_index: Option<usize>,
}

impl LayerSample {
    pub fn augment_kinds(&self) -> Vec<TransformKind> {
        self.stages
            .iter()
            .filter_map(|s| match s {
                Stage::Augment { kind, .. } => Some(*kind),
                Stage::Blend { .. } => None,
            })
            .collect()
    }

    /// Blend count equals the exit layer, and no two augmentation stages
    /// are adjacent except the leading pair that feeds the first blend.
    pub fn is_well_formed(&self) -> bool {
        if self.blend_trace.len() != self.exit_layer as usize {
            return false;
        }
        let expected_len = match self.exit_layer {
            0 => 1,
            1 => 3,
            _ => 5,
        };
        if self.stages.len() != expected_len {
            return false;
        }
        // Layout: A | A A B | A A B B A. The two leading augmentations are
        // parallel branches over the original image, not a chain.
        self.stages.iter().enumerate().all(|(i, s)| match (i, s) {
            (0 | 1 | 4, Stage::Augment { .. }) => true,
            (2 | 3, Stage::Blend { .. }) => true,
            _ => false,
        })
    }
}

/// Runs the pipeline. With `all_layers` the exit draw is recorded but every
/// layer is computed and returned in order.
fn run(
    img: &Image,
    bank: &FractalBank,
    cfg: &PipelineConfig,
    rng: &mut RngStream,
    coupling: StageCoupling,
    all_layers: bool,
) -> Result<(LayerSample, Vec<Image>)> {
    let weights = cfg.blend_weights();
    let exit = choose_layer_exit(rng);
    let stop = if all_layers { 2 } else { exit };

    let first = sample_transform_from(rng, &cfg.transforms);
    let next_kind = |rng: &mut RngStream| -> TransformDescriptor {
        match coupling {
            StageCoupling::Shared => first,
            StageCoupling::Independent => sample_transform_from(rng, &cfg.transforms),
        }
    };

    let mut stages = Vec::with_capacity(5);
    let mut blends = Vec::with_capacity(2);
    let mut layers = Vec::with_capacity(3);

    let (x, level) = apply_transform_traced(img, &first, cfg.magnitude, rng)?;
    stages.push(Stage::Augment { kind: first.kind, level });
    layers.push(x);

    let mut fractal_index = None;
    if stop >= 1 {
        let second = next_kind(rng);
        let (x2, level) = apply_transform_traced(img, &second, cfg.magnitude, rng)?;
        stages.push(Stage::Augment { kind: second.kind, level });
        let method = choose_blend_method(rng, &weights)?.tag;
        let y = blend(&layers[0], &x2, method, rng, cfg.blending_ratio, cfg.eps_geometric)?;
        stages.push(Stage::Blend { method });
        blends.push(method);
        layers.push(y);
    }
    if stop >= 2 {
        let method = choose_blend_method(rng, &weights)?.tag;
        let draw = crate::fractal::FractalDraw::sample(rng, bank.count());
        let picture = crate::fractal::serve(&bank.get(draw.index)?, &draw, rng, img.shape())?;
        fractal_index = Some(draw.index);
        let y = blend(&layers[1], &picture, method, rng, cfg.blending_ratio, cfg.eps_geometric)?;
        stages.push(Stage::Blend { method });
        blends.push(method);
        let third = next_kind(rng);
        let (z, level) = apply_transform_traced(&y, &third, cfg.magnitude, rng)?;
        stages.push(Stage::Augment { kind: third.kind, level });
        layers.push(z);
    }

    let exit_stages = match exit {
        0 => 1,
        1 => 3,
        _ => 5,
    };
    stages.truncate(exit_stages);
    blends.truncate(exit as usize);
    if exit < 2 {
        fractal_index = None;
    }
    let sample = LayerSample {
        image: layers[exit as usize].clone(),
        exit_layer: exit,
        transform_kind: first.kind,
        blend_trace: blends,
        stages,
        fractal_index,
    };
    Ok((sample, layers))
}

/// One pipeline draw with a shared transform kind across stages.
pub fn layermix(
    img: &Image,
    bank: &FractalBank,
    cfg: &PipelineConfig,
    rng: &mut RngStream,
) -> Result<LayerSample> {
    cfg.validate()?;
    run(img, bank, cfg, rng, StageCoupling::Shared, false).map(|(s, _)| s)
}

/// Reference structure in which every stage redraws its transform kind.
pub fn iid_pipeline(
    img: &Image,
    bank: &FractalBank,
    cfg: &PipelineConfig,
    rng: &mut RngStream,
) -> Result<LayerSample> {
    cfg.validate()?;
    run(img, bank, cfg, rng, StageCoupling::Independent, false).map(|(s, _)| s)
}

/// All three layer outputs for one draw, plus the sample the draw selects.
///
/// Stages run in the same order as [`layermix`], so the selected sample is
/// bit-identical to what `layermix` returns for the same stream.
pub fn layermix_layers(
    img: &Image,
    bank: &FractalBank,
    cfg: &PipelineConfig,
    rng: &mut RngStream,
) -> Result<(LayerSample, [Image; 3])> {
    cfg.validate()?;
    let (sample, layers) = run(img, bank, cfg, rng, StageCoupling::Shared, true)?;
    let [a, b, c]: [Image; 3] = layers.try_into().expect("three layers");
    Ok((sample, [a, b, c]))
}

/// Runs `layermix` on each image with stream `(cfg.seed, index)`.
pub fn layermix_batch(
    imgs: &[Image],
    bank: &FractalBank,
    cfg: &PipelineConfig,
) -> Result<Vec<LayerSample>> {
    layermix_batch_with(imgs, bank, cfg, true)
}

pub fn layermix_batch_with(
    imgs: &[Image],
    bank: &FractalBank,
    cfg: &PipelineConfig,
    parallel: bool,
) -> Result<Vec<LayerSample>> {
    cfg.validate()?;
    if let Some(first) = imgs.first() {
        if let Some(bad) = imgs.iter().find(|i| i.shape() != first.shape()) {
            return Err(Error::ShapeMismatch {
                expected: first.shape(),
                actual: bad.shape(),
            });
        }
    }
    let one = |(i, img): (usize, &Image)| {
        let mut rng = RngStream::new(cfg.seed, i as u64);
        layermix(img, bank, cfg, &mut rng)
    };
    if parallel {
        imgs.par_iter().enumerate().map(one).collect()
    } else {
        imgs.iter().enumerate().map(one).collect()
    }
}
