//! Compound beta-gamma-normal distribution.
//!
//! `X1 ~ G4B(φ1, φ2, φ3, κ2/κ1)`, `1/X2 | X1 ~ Gamma(φ1, κ1 - κ2 X1)` and
//! `X3 | X1, X2 ~ N(μ, X2 Σ / (1 - X1))`. Densities are taken with respect to
//! the precision `1/X2`.

use nalgebra::DVector;
use rand::RngCore;

use crate::error::{domain, Error, Result};
use crate::gbeta4::{G4BParams, G4BSampler, G4B};
use crate::numkernel::{log_pdf_gamma, sample_gamma, MvNormalSampler, SpdMatrix};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct BGNParams {
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub mu: DVector<f64>,
    pub sigma_scale: SpdMatrix,
}

/// One compound draw `(x1, 1/x2, x3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BGNDraw {
    pub x1: f64,
    pub inv_x2: f64,
    pub x3: DVector<f64>,
}

impl BGNParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi1.is_finite() && self.phi1 > 0.0) {
            return Err(domain(format!("phi1 must be > 0, got {}", self.phi1)));
        }
        if !(self.kappa1.is_finite() && self.kappa1 > 0.0) {
            return Err(domain(format!("kappa1 must be > 0, got {}", self.kappa1)));
        }
        if !(self.kappa2 >= 0.0 && self.kappa2 < self.kappa1) {
            return Err(domain(format!(
                "need 0 <= kappa2 < kappa1, got kappa1={}, kappa2={}",
                self.kappa1, self.kappa2
            )));
        }
        if self.mu.len() != self.sigma_scale.dim() || self.mu.is_empty() {
            return Err(Error::Dimension(format!(
                "mu has length {}, scale matrix is {}x{}",
                self.mu.len(),
                self.sigma_scale.dim(),
                self.sigma_scale.dim()
            )));
        }
        self.delta_marginal().validate()
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Marginal law of `x1`.
    pub fn delta_marginal(&self) -> G4BParams {
        G4BParams {
            phi1: self.phi1,
            phi2: self.phi2,
            phi3: self.phi3,
            lambda: self.kappa2 / self.kappa1,
        }
    }

    /// Rate of the conditional gamma law of `1/x2` given `x1`.
    pub fn precision_rate(&self, x1: f64) -> f64 {
        self.kappa1 - self.kappa2 * x1
    }

    pub fn joint_log_pdf(&self, x1: f64, inv_x2: f64, x3: &DVector<f64>) -> Result<f64> {
        self.validate()?;
        let g4b = G4B::new(self.delta_marginal())?;
        let chol_logdet = self.sigma_scale.logdet();
        self.joint_log_pdf_with(&g4b, chol_logdet, x1, inv_x2, x3)
    }

    fn joint_log_pdf_with(
        &self,
        g4b: &G4B,
        logdet_sigma: f64,
        x1: f64,
        inv_x2: f64,
        x3: &DVector<f64>,
    ) -> Result<f64> {
        if x3.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "x3 has length {}, expected {}",
                x3.len(),
                self.dim()
            )));
        }
        let lp_delta = g4b.log_pdf(x1)?;
        let lp_prec = log_pdf_gamma(self.phi1, self.precision_rate(x1), inv_x2)?;
        // covariance Σ / (inv_x2 (1 - x1))
        let scale = inv_x2 * (1.0 - x1);
        let p = self.dim() as f64;
        let resid = x3 - &self.mu;
        let q = self.sigma_scale.inv_quad_form(&resid)?;
        let lp_normal = -0.5 * p * LN_2PI + 0.5 * p * scale.ln() - 0.5 * logdet_sigma - 0.5 * scale * q;
        Ok(lp_delta + lp_prec + lp_normal)
    }

    pub fn sampler(&self) -> Result<BGNSampler> {
        BGNSampler::new(self.clone())
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<BGNDraw> {
        self.sampler()?.sample(rng)
    }
}

/// Cached compound sampler and density evaluator.
#[derive(Debug, Clone)]
pub struct BGNSampler {
    params: BGNParams,
    g4b: G4BSampler,
    dist: G4B,
    normal: MvNormalSampler,
    logdet_sigma: f64,
}

impl BGNSampler {
    pub fn new(params: BGNParams) -> Result<Self> {
        params.validate()?;
        let marginal = params.delta_marginal();
        Ok(Self {
            g4b: G4BSampler::new(marginal)?,
            dist: G4B::new(marginal)?,
            normal: MvNormalSampler::new(params.mu.clone(), &params.sigma_scale)?,
            logdet_sigma: params.sigma_scale.logdet(),
            params,
        })
    }

    pub fn params(&self) -> &BGNParams {
        &self.params
    }

    pub fn delta_sampler(&self) -> &G4BSampler {
        &self.g4b
    }

    pub fn joint_log_pdf(&self, x1: f64, inv_x2: f64, x3: &DVector<f64>) -> Result<f64> {
        self.params.joint_log_pdf_with(&self.dist, self.logdet_sigma, x1, inv_x2, x3)
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<BGNDraw> {
        let x1 = self.g4b.sample(rng);
        let inv_x2 = sample_gamma(self.params.phi1, self.params.precision_rate(x1), rng)?;
        let x3 = self.normal.sample_scaled(1.0 / (inv_x2 * (1.0 - x1)), rng);
        Ok(BGNDraw { x1, inv_x2, x3 })
    }
}
