//! Auto-covariance between augmentation stages.
//!
//! Each transform `k` is summarized by per-stage means `μ_ki` and standard
//! deviations `σ_ki` of some scalar statistic. When a call draws `k` once and
//! reuses it for every stage, the stage outputs are coupled through `k`:
//!
//! ```text
//! K_ii = E_k[σ_ki²] + E_k[μ_ki²] − E_k[μ_ki]²
//! K_ij = E_k[μ_ki μ_kj] − E_k[μ_ki] E_k[μ_kj]      (i ≠ j)
//! ```
//!
//! Redrawing `k` per stage removes every off-diagonal term.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_core::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::sampling::RngStream;
use crate::transforms::{apply_transform, TransformDescriptor};

const BLOCK: usize = 8192;

/// Moments of one transform across stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformMoments {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub mixture_prob: f64,
}

/// Per-transform moments plus mixture probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformStats {
    pub transforms: Vec<TransformMoments>,
}

impl TransformStats {
    pub fn stages(&self) -> usize {
        self.transforms.first().map_or(0, |t| t.mu.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.transforms.is_empty() {
            return Err(Error::Parameter("at least one transform is required".into()));
        }
        let d = self.stages();
        if d == 0 {
            return Err(Error::Parameter("at least one stage is required".into()));
        }
        for (k, t) in self.transforms.iter().enumerate() {
            if t.mu.len() != d || t.sigma.len() != d {
                return Err(Error::Parameter(format!(
                    "transform {k}: expected {d} stages, got mu {} / sigma {}",
                    t.mu.len(),
                    t.sigma.len()
                )));
            }
            if t.sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
                return Err(Error::Parameter(format!("transform {k}: sigma must be finite and >= 0")));
            }
            if t.mu.iter().any(|m| !m.is_finite()) {
                return Err(Error::Parameter(format!("transform {k}: mu must be finite")));
            }
            if !(t.mixture_prob >= 0.0) {
                return Err(Error::Parameter(format!("transform {k}: negative mixture probability")));
            }
        }
        let total: f64 = self.transforms.iter().map(|t| t.mixture_prob).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("mixture probabilities sum to {total}, not 1")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// One transform draw shared by all stages.
    Layermix,
    /// An independent transform draw per stage.
    Iid,
}

/// Closed-form auto-covariance for the shared-draw structure.
pub fn analytic_autocovariance(stats: &TransformStats) -> Result<DMatrix<f64>> {
    stats.validate()?;
    let d = stats.stages();
    let mut mean = DVector::zeros(d);
    let mut second = DMatrix::zeros(d, d);
    for t in &stats.transforms {
        let mu = DVector::from_column_slice(&t.mu);
        mean += &mu * t.mixture_prob;
        second += (&mu * mu.transpose()) * t.mixture_prob;
        for i in 0..d {
            second[(i, i)] += t.mixture_prob * t.sigma[i] * t.sigma[i];
        }
    }
    Ok(second - &mean * mean.transpose())
}

/// Closed-form auto-covariance when every stage redraws its transform:
/// the marginal variances on the diagonal and zeros elsewhere.
pub fn analytic_iid_autocovariance(stats: &TransformStats) -> Result<DMatrix<f64>> {
    let full = analytic_autocovariance(stats)?;
    Ok(DMatrix::from_diagonal(&full.diagonal()))
}

pub fn analytic_for(generator: Generator, stats: &TransformStats) -> Result<DMatrix<f64>> {
    match generator {
        Generator::Layermix => analytic_autocovariance(stats),
        Generator::Iid => analytic_iid_autocovariance(stats),
    }
}

/// Running mean and co-moment, merged in a fixed order.
#[derive(Clone, Debug)]
struct CoMoments {
    n: usize,
    mean: Vec<f64>,
    /// Row-major `d × d` co-moment.
    m2: Vec<f64>,
    delta: Vec<f64>,
}

impl CoMoments {
    fn new(d: usize) -> Self {
        Self { n: 0, mean: vec![0.0; d], m2: vec![0.0; d * d], delta: vec![0.0; d] }
    }

    fn push(&mut self, x: &[f64]) {
        let d = self.mean.len();
        self.n += 1;
        let inv = 1.0 / self.n as f64;
        for i in 0..d {
            self.delta[i] = x[i] - self.mean[i];
            self.mean[i] += self.delta[i] * inv;
        }
        for i in 0..d {
            let after = x[i] - self.mean[i];
            for j in 0..d {
                self.m2[j * d + i] += self.delta[j] * after;
            }
        }
    }

    fn merge(mut self, other: CoMoments) -> CoMoments {
        if other.n == 0 {
            return self;
        }
        if self.n == 0 {
            return other;
        }
        let d = self.mean.len();
        let n = self.n + other.n;
        let w = (self.n as f64) * (other.n as f64) / n as f64;
        let delta: Vec<f64> = (0..d).map(|i| other.mean[i] - self.mean[i]).collect();
        for i in 0..d {
            for j in 0..d {
                self.m2[i * d + j] += other.m2[i * d + j] + delta[i] * delta[j] * w;
            }
        }
        for i in 0..d {
            self.mean[i] += delta[i] * (other.n as f64 / n as f64);
        }
        self.n = n;
        self
    }
}

fn pick(rng: &mut RngStream, cumulative: &[f64]) -> usize {
    let u = rng.uniform();
    cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1)
}

/// Sample auto-covariance (unbiased) of the scalar generative process.
///
/// Trial blocks draw from streams keyed by a base seed taken from `rng`, so
/// the estimate does not depend on thread count.
pub fn empirical_autocovariance(
    generator: Generator,
    stats: &TransformStats,
    n: usize,
    rng: &mut RngStream,
) -> Result<DMatrix<f64>> {
    stats.validate()?;
    if n < 2 {
        return Err(Error::Parameter(format!("need at least 2 samples, got {n}")));
    }
    let d = stats.stages();
    let mut cumulative = Vec::with_capacity(stats.transforms.len());
    let mut acc = 0.0;
    for t in &stats.transforms {
        acc += t.mixture_prob;
        cumulative.push(acc);
    }
    let base = rng.next_u64();
    let blocks = n.div_ceil(BLOCK);
    let parts: Vec<CoMoments> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = RngStream::new(base, b as u64);
            let mut m = CoMoments::new(d);
            let mut x = vec![0.0; d];
            let len = BLOCK.min(n - b * BLOCK);
            for _ in 0..len {
                let shared = pick(&mut rng, &cumulative);
                for i in 0..d {
                    let k = match generator {
                        Generator::Layermix => shared,
                        Generator::Iid if i == 0 => shared,
                        Generator::Iid => pick(&mut rng, &cumulative),
                    };
                    let t = &stats.transforms[k];
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x[i] = t.mu[i] + t.sigma[i] * z;
                }
                m.push(&x);
            }
            m
        })
        .collect();
    let total = parts.into_iter().fold(CoMoments::new(d), CoMoments::merge);
    let m = DMatrix::from_row_slice(d, d, &total.m2) / (total.n as f64 - 1.0);
    Ok((&m + m.transpose()) * 0.5)
}

/// True if `m` is symmetric and has no eigenvalue below `-tol`.
pub fn is_symmetric_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().all(|&e| e >= -tol)
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub pipeline: Generator,
    pub analytic: Vec<Vec<f64>>,
    pub empirical: Vec<Vec<f64>>,
    pub max_abs_deviation: f64,
    pub n_samples: usize,
}

/// Analytic versus Monte-Carlo covariance for one generator.
pub fn covariance_report(
    generator: Generator,
    stats: &TransformStats,
    n: usize,
    rng: &mut RngStream,
) -> Result<CovarianceReport> {
    let analytic = analytic_for(generator, stats)?;
    let empirical = empirical_autocovariance(generator, stats, n, rng)?;
    let max_abs_deviation = (&analytic - &empirical).abs().max();
    Ok(CovarianceReport {
        pipeline: generator,
        analytic: to_rows(&analytic),
        empirical: to_rows(&empirical),
        max_abs_deviation,
        n_samples: n,
    })
}

/// Measures a scalar statistic of transformed probes: one probe per stage,
/// `n` independent applications each. Returns moments with `mixture_prob`
/// left at zero for the caller to fill.
pub fn estimate_transform_stats(
    desc: &TransformDescriptor,
    magnitude: u8,
    probes: &[Image],
    statistic: impl Fn(&Image) -> f64,
    n: usize,
    rng: &mut RngStream,
) -> Result<TransformMoments> {
    if n < 100 {
        return Err(Error::Parameter(format!("need at least 100 applications, got {n}")));
    }
    if probes.is_empty() {
        return Err(Error::Parameter("at least one probe image is required".into()));
    }
    let mut mu = Vec::with_capacity(probes.len());
    let mut sigma = Vec::with_capacity(probes.len());
    for probe in probes {
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for i in 0..n {
            let v = statistic(&apply_transform(probe, desc, magnitude, rng)?);
            let delta = v - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (v - mean);
        }
        mu.push(mean);
        sigma.push((m2 / (n - 1) as f64).sqrt());
    }
    Ok(TransformMoments { mu, sigma, mixture_prob: 0.0 })
}

/// Mean intensity, the default probe statistic.
pub fn mean_intensity(img: &Image) -> f64 {
    img.mean()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::TransformKind;

    fn two_gaussians() -> TransformStats {
        TransformStats {
            transforms: vec![
                TransformMoments { mu: vec![0.0, 0.0], sigma: vec![1.0, 1.0], mixture_prob: 0.5 },
                TransformMoments { mu: vec![2.0, 2.0], sigma: vec![1.0, 1.0], mixture_prob: 0.5 },
            ],
        }
    }

    #[test]
    fn two_gaussian_fixture() {
        let k = analytic_autocovariance(&two_gaussians()).unwrap();
        assert_eq!(k, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
    }

    #[test]
    fn single_transform_has_no_cross_terms() {
        let stats = TransformStats {
            transforms: vec![TransformMoments { mu: vec![1.0, -2.0, 3.0], sigma: vec![0.5, 1.5, 2.0], mixture_prob: 1.0 }],
        };
        let k = analytic_autocovariance(&stats).unwrap();
        assert_eq!(k, DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 2.25, 4.0])));
    }

    #[test]
    fn equal_means_kill_off_diagonal() {
        let stats = TransformStats {
            transforms: vec![
                TransformMoments { mu: vec![1.0, 1.0], sigma: vec![0.5, 2.0], mixture_prob: 0.3 },
                TransformMoments { mu: vec![1.0, 1.0], sigma: vec![1.0, 1.0], mixture_prob: 0.7 },
            ],
        };
        let k = analytic_autocovariance(&stats).unwrap();
        assert!(k[(0, 1)].abs() < 1e-15 && k[(1, 0)].abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let stats = TransformStats {
            transforms: vec![
                TransformMoments { mu: vec![0.0, 0.0], sigma: vec![1.0], mixture_prob: 1.0 },
            ],
        };
        assert!(analytic_autocovariance(&stats).is_err());
        let mut rng = RngStream::new(0, 0);
        assert!(empirical_autocovariance(Generator::Layermix, &two_gaussians(), 1, &mut rng).is_err());
    }

    #[test]
    fn deterministic_process_has_zero_covariance() {
        let stats = TransformStats {
            transforms: vec![TransformMoments { mu: vec![0.3, 0.7], sigma: vec![0.0, 0.0], mixture_prob: 1.0 }],
        };
        let mut rng = RngStream::new(1, 1);
        let k = empirical_autocovariance(Generator::Layermix, &stats, 2, &mut rng).unwrap();
        assert_eq!(k, DMatrix::zeros(2, 2));
    }

    #[test]
    fn empirical_tracks_analytic() {
        let stats = two_gaussians();
        let mut rng = RngStream::new(2, 0);
        let shared = empirical_autocovariance(Generator::Layermix, &stats, 200_000, &mut rng).unwrap();
        let iid = empirical_autocovariance(Generator::Iid, &stats, 200_000, &mut rng).unwrap();
        assert!((shared[(0, 1)] - 1.0).abs() < 0.05);
        assert!(iid[(0, 1)].abs() < 0.05);
        assert!((iid[(0, 0)] - 2.0).abs() < 0.05);
    }

    #[test]
    fn empirical_is_reproducible() {
        let stats = two_gaussians();
        let a = empirical_autocovariance(Generator::Iid, &stats, 50_000, &mut RngStream::new(3, 3)).unwrap();
        let b = empirical_autocovariance(Generator::Iid, &stats, 50_000, &mut RngStream::new(3, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn psd_check() {
        assert!(is_symmetric_psd(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]), 1e-12));
        assert!(!is_symmetric_psd(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), 1e-12));
        assert!(!is_symmetric_psd(&DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]), 1e-12));
    }

    #[test]
    fn report_serializes_expected_fields() {
        let report = covariance_report(Generator::Layermix, &two_gaussians(), 1000, &mut RngStream::new(0, 0)).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        for key in ["analytic", "empirical", "max_abs_deviation", "n_samples"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn identity_transform_stats() {
        let probe = Image::from_fn(8, 8, 3, |y, x, c| ((y + x + c) % 5) as f32 / 5.0);
        let mut rng = RngStream::new(4, 0);
        let desc = TransformKind::Rotate.descriptor();
        let m = estimate_transform_stats(&desc, 0, &[probe.clone()], mean_intensity, 100, &mut rng).unwrap();
        assert!(m.sigma[0].abs() < 1e-12);
        assert!((m.mu[0] - probe.mean()).abs() < 1e-12);
    }

    #[test]
    fn brightness_stats_are_symmetric() {
        let probe = Image::filled(4, 4, 3, 0.5);
        let desc = TransformKind::Brightness.descriptor();
        let mut rng = RngStream::new(5, 0);
        let m = estimate_transform_stats(&desc, 10, &[probe], mean_intensity, 20_000, &mut rng).unwrap();
        assert!((m.mu[0] - 0.5).abs() < 0.005, "{}", m.mu[0]);
        assert!(m.sigma[0] > 0.1);
        let mut again = RngStream::new(5, 0);
        let probe = Image::filled(4, 4, 3, 0.5);
        let m2 = estimate_transform_stats(&desc, 10, &[probe], mean_intensity, 20_000, &mut again).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn too_few_applications_rejected() {
        let probe = Image::filled(2, 2, 1, 0.5);
        let desc = TransformKind::Brightness.descriptor();
        assert!(estimate_transform_stats(&desc, 5, &[probe], mean_intensity, 10, &mut RngStream::new(0, 0)).is_err());
    }
}
