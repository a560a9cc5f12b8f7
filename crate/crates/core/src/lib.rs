//! Structured fractal-mixing image augmentation.
//!
//! The crate provides the augmentation pipeline ([`pipeline`]) and its
//! building blocks (deterministic sampling, transforms, blends and a fractal
//! bank), a toolkit for checking how sharing one transform across stages
//! couples their outputs ([`covariance`]), and model-free robustness and
//! calibration metrics over prediction logs ([`metrics`]).

pub mod blending;
pub mod covariance;
pub mod error;
pub mod fractal;
pub mod image;
pub mod metrics;
pub mod pipeline;
pub mod sampling;
pub mod transforms;

pub use crate::blending::{blend, BlendMask, MaskGranularity};
pub use crate::covariance::{CovarianceReport, Generator, TransformMoments, TransformStats};
pub use crate::error::{Error, Result};
pub use crate::fractal::{CachePolicy, FractalBank};
pub use crate::image::Image;
pub use crate::metrics::{FlipMode, PredictionRecord};
pub use crate::pipeline::{iid_pipeline, layermix, layermix_batch, LayerSample, PipelineConfig};
pub use crate::sampling::{BlendMethod, BlendMethodId, ConicWeights, RngStream};
pub use crate::transforms::{TransformDescriptor, TransformKind};
