//! Reproducible random streams and the elementary samplers built on them.
//!
//! A [`RngStream`] is an immutable `(seed, stream_id)` descriptor. Turning it
//! into a generator always yields the same ChaCha20 sequence, and distinct
//! stream ids select non-overlapping ChaCha streams for the same seed.

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numkernel::linalg::SpdMatrix;

/// Live generator produced from a [`RngStream`].
pub type StreamRng = ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn generator(&self) -> StreamRng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// A child stream keyed by `index`, stable across runs.
    pub fn substream(&self, index: u64) -> RngStream {
        let id = splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)));
        RngStream {
            seed: self.seed,
            stream_id: id,
        }
    }
}

/// Uniform draw on the open interval `(0, 1)`.
pub fn sample_uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let bits = rng.next_u64() >> 11;
    (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

pub fn sample_std_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let mut r = rng;
    StandardNormal.sample(&mut r)
}

/// Gamma draw in the shape/rate convention (mean `shape / rate`).
pub fn sample_gamma<R: RngCore + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()) {
        return Err(domain(format!(
            "gamma requires shape, rate > 0, got ({shape}, {rate})"
        )));
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| domain(e.to_string()))?;
    let mut r = rng;
    Ok(g.sample(&mut r))
}

/// Multivariate normal sampler with a cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct MvNormalSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl MvNormalSampler {
    pub fn new(mean: DVector<f64>, cov: &SpdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::Dimension(format!(
                "mean has length {}, covariance is {}x{}",
                mean.len(),
                cov.dim(),
                cov.dim()
            )));
        }
        Ok(Self {
            mean,
            factor: cov.cholesky_factor(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Draw with covariance scaled by `scale` (`scale * cov`).
    pub fn sample_scaled<R: RngCore + ?Sized>(&self, scale: f64, rng: &mut R) -> DVector<f64> {
        let p = self.dim();
        let z = DVector::from_fn(p, |_, _| sample_std_normal(rng));
        let sd = scale.sqrt();
        let mut out = self.mean.clone();
        for i in 0..p {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += self.factor[(i, j)] * z[j];
            }
            out[i] += sd * acc;
        }
        out
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.sample_scaled(1.0, rng)
    }
}

pub fn sample_mvnormal<R: RngCore + ?Sized>(
    mean: &DVector<f64>,
    cov: &SpdMatrix,
    rng: &mut R,
) -> Result<DVector<f64>> {
    Ok(MvNormalSampler::new(mean.clone(), cov)?.sample(rng))
}
