//! Deterministic random streams and the samplers the pipeline draws from.
//!
//! Every stream is keyed by `(seed, stream_id)` and advanced by an internal
//! block counter, so a work item can reconstruct its randomness without
//! knowing anything about the order in which other items were processed.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counter-based random stream keyed by `(seed, stream_id)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Position in the keystream, in 32-bit words.
    pub fn counter(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Uniform draw on `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw on `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer in `0..n`. `n` must be nonzero.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        // Lemire's multiply-shift with rejection of the biased zone.
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.inner.next_u64();
            let m = (x as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Which shape parameter of a Beta law is pinned to one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnitShape {
    /// `B(1, shape)`, CDF `1 - (1 - x)^shape`.
    AlphaIsOne,
    /// `B(shape, 1)`, CDF `x^shape`.
    BetaIsOne,
}

/// Inverse-CDF evaluation of a one-unit-shape Beta law at `u`.
pub fn beta_unit_shape_quantile(u: f64, shape: f64, side: UnitShape) -> f64 {
    match side {
        UnitShape::BetaIsOne => u.powf(1.0 / shape),
        UnitShape::AlphaIsOne => 1.0 - (1.0 - u).powf(1.0 / shape),
    }
}

/// Draws from `B(shape, 1)` or `B(1, shape)` by inverting the CDF.
pub fn beta_unit_shape(rng: &mut RngStream, shape: f64, side: UnitShape) -> Result<f64> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(Error::Parameter(format!(
            "beta shape must be positive and finite, got {shape}"
        )));
    }
    let u = rng.uniform();
    Ok(beta_unit_shape_quantile(u, shape, side))
}

/// Blending coefficients for the arithmetic and geometric blends.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicWeights {
    pub a: f64,
    pub b: f64,
}

impl ConicWeights {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }
}

/// Samples `(a, b)` from the Beta mixtures:
/// `a ~ ½ B(β,1) + ½ (1 + B(1,β))` on `[0, 2]` and
/// `b ~ ½ B(1,β) + ½ (−B(1,β))` on `[−1, 1]`.
///
/// Each coefficient picks its mixture branch with its own fair coin.
pub fn sample_conic_weights(rng: &mut RngStream, beta: f64) -> Result<ConicWeights> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Parameter(format!(
            "blending ratio must be positive and finite, got {beta}"
        )));
    }
    let a = if rng.bernoulli(0.5) {
        beta_unit_shape(rng, beta, UnitShape::BetaIsOne)?
    } else {
        1.0 + beta_unit_shape(rng, beta, UnitShape::AlphaIsOne)?
    };
    let b = if rng.bernoulli(0.5) {
        beta_unit_shape(rng, beta, UnitShape::AlphaIsOne)?
    } else {
        -beta_unit_shape(rng, beta, UnitShape::AlphaIsOne)?
    };
    Ok(ConicWeights { a, b })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendMethod {
    Arithmetic,
    Geometric,
    PixelMix,
    ElementMix,
}

impl BlendMethod {
    pub const ALL: [BlendMethod; 4] = [
        BlendMethod::Arithmetic,
        BlendMethod::Geometric,
        BlendMethod::PixelMix,
        BlendMethod::ElementMix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BlendMethod::Arithmetic => "arithmetic",
            BlendMethod::Geometric => "geometric",
            BlendMethod::PixelMix => "pixel_mix",
            BlendMethod::ElementMix => "element_mix",
        }
    }
}

/// A blend method paired with its selection probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlendMethodId {
    pub tag: BlendMethod,
    pub probability: f64,
}

/// Reweighted blend mixture: arithmetic and geometric at 1/3 each, pixel and
/// element mixing at 1/6 each.
pub fn default_blend_weights() -> Vec<BlendMethodId> {
    vec![
        BlendMethodId { tag: BlendMethod::Arithmetic, probability: 1.0 / 3.0 },
        BlendMethodId { tag: BlendMethod::Geometric, probability: 1.0 / 3.0 },
        BlendMethodId { tag: BlendMethod::PixelMix, probability: 1.0 / 6.0 },
        BlendMethodId { tag: BlendMethod::ElementMix, probability: 1.0 / 6.0 },
    ]
}

/// Checks that a weight list is nonempty, nonnegative and sums to one.
pub fn validate_blend_weights(weights: &[BlendMethodId]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::Parameter("blend weight list is empty".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(w.probability >= 0.0) || !w.probability.is_finite()) {
        return Err(Error::Parameter(format!(
            "blend probability for {} must be finite and nonnegative, got {}",
            w.tag.name(),
            w.probability
        )));
    }
    let total: f64 = weights.iter().map(|w| w.probability).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Parameter(format!(
            "blend probabilities must sum to 1, got {total}"
        )));
    }
    Ok(())
}

/// Multinomial draw over the configured blend methods.
pub fn choose_blend_method(rng: &mut RngStream, weights: &[BlendMethodId]) -> Result<BlendMethodId> {
    if weights.is_empty() {
        return Err(Error::Parameter("blend weight list is empty".into()));
    }
    let u = rng.uniform();
    let mut acc = 0.0;
    for w in weights {
        acc += w.probability;
        if u < acc {
            return Ok(*w);
        }
    }
    // Rounding can leave `acc` a hair below one; fall back to the last
    // entry with positive mass.
    Ok(*weights
        .iter()
        .rev()
        .find(|w| w.probability > 0.0)
        .unwrap_or(&weights[weights.len() - 1]))
}

/// Which pipeline sample is returned: 0, 1 or 2, uniformly.
pub fn choose_layer_exit(rng: &mut RngStream) -> u8 {
    rng.below(3) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_sequence() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 4);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let n = 200_000;
        let mut a = RngStream::new(11, 0);
        let mut b = RngStream::new(11, 1);
        let (mut sxy, mut sx, mut sy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = a.uniform();
            let y = b.uniform();
            sx += x;
            sy += y;
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - (sx / nf) * (sy / nf);
        let vx = sxx / nf - (sx / nf).powi(2);
        let vy = syy / nf - (sy / nf).powi(2);
        let r = cov / (vx * vy).sqrt();
        // 4 standard errors of a null correlation.
        assert!(r.abs() < 4.0 / nf.sqrt(), "r = {r}");
    }

    #[test]
    fn uniform_stays_in_unit_interval() {
        let mut rng = RngStream::new(0, 0);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn unit_shape_one_is_identity() {
        let u = 0.37;
        assert_eq!(beta_unit_shape_quantile(u, 1.0, UnitShape::BetaIsOne), 0.37);
        assert!((beta_unit_shape_quantile(u, 1.0, UnitShape::AlphaIsOne) - 0.37).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_shape() {
        let mut rng = RngStream::new(0, 0);
        assert!(beta_unit_shape(&mut rng, 0.0, UnitShape::BetaIsOne).is_err());
        assert!(beta_unit_shape(&mut rng, -2.0, UnitShape::AlphaIsOne).is_err());
        assert!(beta_unit_shape(&mut rng, f64::NAN, UnitShape::AlphaIsOne).is_err());
        assert!(sample_conic_weights(&mut rng, 0.0).is_err());
    }

    #[test]
    fn beta_means_match_closed_form() {
        let n = 1_000_000;
        let mut rng = RngStream::new(2024, 0);
        let m_hi: f64 = (0..n)
            .map(|_| beta_unit_shape(&mut rng, 3.0, UnitShape::BetaIsOne).unwrap())
            .sum::<f64>()
            / n as f64;
        let m_lo: f64 = (0..n)
            .map(|_| beta_unit_shape(&mut rng, 3.0, UnitShape::AlphaIsOne).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((m_hi - 0.75).abs() < 0.002, "{m_hi}");
        assert!((m_lo - 0.25).abs() < 0.002, "{m_lo}");
    }

    #[test]
    fn conic_support() {
        let mut rng = RngStream::new(5, 5);
        for _ in 0..50_000 {
            let w = sample_conic_weights(&mut rng, 0.7).unwrap();
            assert!((0.0..=2.0).contains(&w.a));
            assert!((-1.0..=1.0).contains(&w.b));
        }
    }

    #[test]
    fn single_entry_always_chosen() {
        let mut rng = RngStream::new(1, 1);
        let w = [BlendMethodId { tag: BlendMethod::PixelMix, probability: 1.0 }];
        for _ in 0..1000 {
            assert_eq!(choose_blend_method(&mut rng, &w).unwrap().tag, BlendMethod::PixelMix);
        }
    }

    #[test]
    fn degenerate_weights_pick_arithmetic() {
        let mut rng = RngStream::new(1, 2);
        let mut w = default_blend_weights();
        for (i, e) in w.iter_mut().enumerate() {
            e.probability = if i == 0 { 1.0 } else { 0.0 };
        }
        for _ in 0..1000 {
            assert_eq!(choose_blend_method(&mut rng, &w).unwrap().tag, BlendMethod::Arithmetic);
        }
    }

    #[test]
    fn empty_weights_rejected() {
        let mut rng = RngStream::new(1, 2);
        assert!(choose_blend_method(&mut rng, &[]).is_err());
        assert!(validate_blend_weights(&[]).is_err());
    }

    #[test]
    fn default_weights_are_normalized() {
        validate_blend_weights(&default_blend_weights()).unwrap();
    }

    #[test]
    fn layer_exit_is_reproducible() {
        let mut a = RngStream::new(99, 0);
        let mut b = RngStream::new(99, 0);
        let xs: Vec<u8> = (0..64).map(|_| choose_layer_exit(&mut a)).collect();
        let ys: Vec<u8> = (0..64).map(|_| choose_layer_exit(&mut b)).collect();
        assert_eq!(xs, ys);
        assert!(xs.iter().all(|&x| x < 3));
    }

    #[test]
    fn below_is_in_range() {
        let mut rng = RngStream::new(3, 3);
        for n in 1..50u64 {
            for _ in 0..50 {
                assert!(rng.below(n) < n);
            }
        }
    }
}
