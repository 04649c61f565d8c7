//! Balanced one-way mixed model `y_it = x_iᵗβ + u_i + e_it` with `w`
//! replicates per group: sufficient statistics, conjugate prior, closed-form
//! posterior and Monte Carlo summaries.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bgn::{BGNParams, BGNSampler};
use crate::error::{domain, Error, Result};
use crate::numkernel::{log_pdf_beta, log_pdf_gamma, RngStream, SpdMatrix};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
// reciprocal condition bound on XᵗX below which the design counts as rank deficient
const RANK_TOL: f64 = 1e-12;
const SUMMARY_CHUNK: usize = 8192;

#[derive(Debug, Clone, PartialEq)]
pub struct BalancedDataset {
    /// `n × w` responses, one row per group.
    pub y: DMatrix<f64>,
    /// `n × p` group-level design.
    pub x: DMatrix<f64>,
}

impl BalancedDataset {
    pub fn new(y: DMatrix<f64>, x: DMatrix<f64>) -> Result<Self> {
        let d = Self { y, x };
        d.validate()?;
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn w(&self) -> usize {
        self.y.ncols()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, w, p) = (self.n(), self.w(), self.p());
        if n < 2 {
            return Err(domain(format!("need at least 2 groups, got {n}")));
        }
        if w < 2 {
            return Err(domain(format!(
                "need at least 2 replicates per group, got {w}"
            )));
        }
        if p < 1 {
            return Err(domain("design needs at least one column"));
        }
        if self.x.nrows() != n {
            return Err(Error::Dimension(format!(
                "design has {} rows for {n} groups",
                self.x.nrows()
            )));
        }
        if p > n {
            return Err(Error::RankDeficient);
        }
        if self.y.iter().chain(self.x.iter()).any(|v| !v.is_finite()) {
            return Err(domain("non-finite value in data"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub n: usize,
    pub w: usize,
    pub p: usize,
    /// `XᵗX / n`.
    pub mn: SpdMatrix,
    pub beta_ols: DVector<f64>,
    pub ybar: DVector<f64>,
    pub q1: f64,
    pub q2: f64,
}

impl SufficientStats {
    pub fn xtx(&self) -> DMatrix<f64> {
        self.mn.matrix() * self.n as f64
    }

    /// `n Mₙ` as an SPD matrix.
    pub fn n_mn(&self) -> SpdMatrix {
        self.mn.scale(self.n as f64).expect("n Mn is SPD")
    }
}

pub fn suff_stats(d: &BalancedDataset) -> Result<SufficientStats> {
    d.validate()?;
    let (n, w, p) = (d.n(), d.w(), d.p());
    let ybar = DVector::from_fn(n, |i, _| d.y.row(i).sum() / w as f64);
    let mut q1 = 0.0;
    for i in 0..n {
        for t in 0..w {
            let r = d.y[(i, t)] - ybar[i];
            q1 += r * r;
        }
    }
    let xtx = d.x.transpose() * &d.x;
    let xtx = SpdMatrix::new(xtx).map_err(|_| Error::RankDeficient)?;
    let diag = xtx.cholesky_factor().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if (lo / hi).powi(2) < RANK_TOL {
        return Err(Error::RankDeficient);
    }
    let beta_ols = xtx.solve(&(d.x.transpose() * &ybar))?;
    let resid = &ybar - &d.x * &beta_ols;
    let q2 = w as f64 * resid.norm_squared();
    Ok(SufficientStats {
        n,
        w,
        p,
        mn: xtx.scale(1.0 / n as f64)?,
        beta_ols,
        ybar,
        q1,
        q2,
    })
}

/// Prior precision of `β` relative to `w(1-δ)/σ²`.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorPrecision {
    Explicit(SpdMatrix),
    /// `Υ0 = ν3 Mₙ`.
    Zellner(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorHyper {
    pub mu1: f64,
    pub nu1: f64,
    pub mu2: f64,
    pub nu2: f64,
    pub beta0: DVector<f64>,
    pub precision: PriorPrecision,
}

impl PriorHyper {
    pub fn zellner(mu1: f64, nu1: f64, mu2: f64, nu2: f64, beta0: DVector<f64>, nu3: f64) -> Self {
        Self {
            mu1,
            nu1,
            mu2,
            nu2,
            beta0,
            precision: PriorPrecision::Zellner(nu3),
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.mu1 > 0.0 && self.mu1 < 1.0) {
            return Err(domain(format!("mu1 must lie in (0, 1), got {}", self.mu1)));
        }
        for (name, v) in [("nu1", self.nu1), ("mu2", self.mu2), ("nu2", self.nu2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(domain(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.beta0.len() != p {
            return Err(Error::Dimension(format!(
                "beta0 has length {}, design has {p} columns",
                self.beta0.len()
            )));
        }
        if self.beta0.iter().any(|v| !v.is_finite()) {
            return Err(domain("beta0 must be finite"));
        }
        match &self.precision {
            PriorPrecision::Explicit(m) if m.dim() != p => Err(Error::Dimension(format!(
                "prior precision is {0}x{0}, design has {p} columns",
                m.dim()
            ))),
            PriorPrecision::Zellner(nu3) if !(*nu3 > 0.0 && nu3.is_finite()) => {
                Err(domain(format!("nu3 must be finite and > 0, got {nu3}")))
            }
            _ => Ok(()),
        }
    }

    /// The prior precision matrix `Υ0`.
    pub fn upsilon0(&self, s: &SufficientStats) -> Result<SpdMatrix> {
        match &self.precision {
            PriorPrecision::Explicit(m) => Ok(m.clone()),
            PriorPrecision::Zellner(nu3) => s.mn.scale(*nu3),
        }
    }

    /// Beta parameters of the prior on `δ`.
    pub fn delta_prior(&self) -> (f64, f64) {
        (self.nu1 * self.mu1, self.nu1 * (1.0 - self.mu1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub delta: f64,
    pub sigma2: f64,
    pub beta: DVector<f64>,
}

pub fn delta_from_components(sigma2: f64, sigma_u2: f64, w: usize) -> f64 {
    let wu = w as f64 * sigma_u2;
    wu / (sigma2 + wu)
}

pub fn sigma_u2_from_delta(delta: f64, sigma2: f64, w: usize) -> f64 {
    delta * sigma2 / (w as f64 * (1.0 - delta))
}

impl ModelParams {
    pub fn from_components(sigma2: f64, sigma_u2: f64, w: usize, beta: DVector<f64>) -> Self {
        Self {
            delta: delta_from_components(sigma2, sigma_u2, w),
            sigma2,
            beta,
        }
    }

    pub fn sigma_u2(&self, w: usize) -> f64 {
        sigma_u2_from_delta(self.delta, self.sigma2, w)
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.delta) {
            return Err(domain(format!("delta must lie in [0, 1), got {}", self.delta)));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(domain(format!("sigma2 must be > 0, got {}", self.sigma2)));
        }
        if self.beta.len() != p {
            return Err(Error::Dimension(format!(
                "beta has length {}, expected {p}",
                self.beta.len()
            )));
        }
        Ok(())
    }
}

/// Log-likelihood of the data through its sufficient statistics.
pub fn marginal_log_likelihood(s: &SufficientStats, m: &ModelParams) -> Result<f64> {
    m.validate(s.p)?;
    let (n, w) = (s.n as f64, s.w as f64);
    let d = &m.beta - &s.beta_ols;
    let fit = s.n_mn().quad_form(&d);
    let one_m = 1.0 - m.delta;
    let quad = s.q1 + one_m * s.q2 + w * one_m * fit;
    let prec = 1.0 / m.sigma2;
    Ok(-0.5 * n * w * LN_2PI + 0.5 * n * w * prec.ln() + 0.5 * n * one_m.ln() - 0.5 * prec * quad)
}

/// Prior log-density at `(δ, 1/σ², β)`.
pub fn prior_log_pdf(h: &PriorHyper, m: &ModelParams, s: &SufficientStats) -> Result<f64> {
    h.validate(s.p)?;
    m.validate(s.p)?;
    if m.delta <= 0.0 {
        return Err(domain("prior density needs delta > 0"));
    }
    let (a, b) = h.delta_prior();
    let lp_delta = log_pdf_beta(a, b, m.delta)?;
    let prec = 1.0 / m.sigma2;
    let lp_prec = log_pdf_gamma(h.nu2, h.nu2 / h.mu2, prec)?;
    let upsilon = h.upsilon0(s)?;
    let scale = s.w as f64 * (1.0 - m.delta) * prec;
    let p = s.p as f64;
    let d = &m.beta - &h.beta0;
    let lp_beta = -0.5 * p * LN_2PI + 0.5 * p * scale.ln() + 0.5 * upsilon.logdet() - 0.5 * scale * upsilon.quad_form(&d);
    Ok(lp_delta + lp_prec + lp_beta)
}

#[derive(Debug, Clone)]
pub struct PosteriorBGN {
    pub bgn: BGNParams,
    pub q3: f64,
    /// `nMₙ + Υ0`.
    pub precision: SpdMatrix,
    pub stats: SufficientStats,
    pub hyper: PriorHyper,
}

pub fn posterior(s: &SufficientStats, h: &PriorHyper) -> Result<PosteriorBGN> {
    h.validate(s.p)?;
    let (n, w) = (s.n as f64, s.w as f64);
    let n_mn = s.n_mn();
    let upsilon = h.upsilon0(s)?;
    let precision = n_mn.add(&upsilon)?;
    let d = &s.beta_ols - &h.beta0;
    // Q3 = dᵗ nMn (nMn + Υ0)⁻¹ Υ0 d
    let ud = upsilon.matrix() * &d;
    let q3 = (n_mn.matrix() * &d).dot(&precision.solve(&ud)?).max(0.0);
    let rhs = n_mn.matrix() * &s.beta_ols + upsilon.matrix() * &h.beta0;
    let beta_tilde = precision.solve(&rhs)?;
    let sigma_scale = precision.inverse().scale(1.0 / w)?;
    let bgn = BGNParams {
        phi1: 0.5 * n * w + h.nu2,
        phi2: h.nu1 * h.mu1,
        phi3: 0.5 * n + h.nu1 * (1.0 - h.mu1),
        kappa1: 0.5 * (s.q1 + s.q2 + 2.0 * h.nu2 / h.mu2 + w * q3),
        kappa2: 0.5 * (s.q2 + w * q3),
        mu: beta_tilde,
        sigma_scale,
    };
    bgn.validate()?;
    Ok(PosteriorBGN {
        bgn,
        q3,
        precision,
        stats: s.clone(),
        hyper: h.clone(),
    })
}

impl PosteriorBGN {
    pub fn log_pdf(&self, m: &ModelParams) -> Result<f64> {
        m.validate(self.stats.p)?;
        self.bgn.joint_log_pdf(m.delta, 1.0 / m.sigma2, &m.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub params: Vec<ParamSummary>,
    pub samples: usize,
    pub seed: RngStream,
    pub level: f64,
    /// Exact posterior mean of `δ`, for comparison with the sample mean.
    pub delta_mean_exact: f64,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Names of the summarized parameters for a design with `p` columns.
pub fn parameter_names(p: usize) -> Vec<String> {
    let mut names = vec!["delta".to_string(), "sigma2".to_string(), "sigma_u2".to_string()];
    names.extend((0..p).map(|j| format!("beta_{j}")));
    names
}

/// Empirical quantile with linear interpolation between order statistics.
pub(crate) fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn posterior_summaries(
    post: &PosteriorBGN,
    samples: usize,
    seed: RngStream,
    level: f64,
) -> Result<PosteriorSummary> {
    if samples < 1000 {
        return Err(domain(format!("need at least 1000 posterior samples, got {samples}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(domain(format!("level must lie in (0, 1), got {level}")));
    }
    let sampler = BGNSampler::new(post.bgn.clone())?;
    let w = post.stats.w;
    let p = post.stats.p;
    let k = 3 + p;
    let n_chunks = samples.div_ceil(SUMMARY_CHUNK);
    let chunks: Vec<Vec<Vec<f64>>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let m = SUMMARY_CHUNK.min(samples - c * SUMMARY_CHUNK);
            let mut rng = seed.substream(c as u64).generator();
            let mut cols = vec![Vec::with_capacity(m); k];
            for _ in 0..m {
                let d = sampler.sample(&mut rng)?;
                let sigma2 = 1.0 / d.inv_x2;
                cols[0].push(d.x1);
                cols[1].push(sigma2);
                cols[2].push(sigma_u2_from_delta(d.x1, sigma2, w));
                for j in 0..p {
                    cols[3 + j].push(d.x3[j]);
                }
            }
            Ok(cols)
        })
        .collect::<Result<_>>()?;
    let tail = 0.5 * (1.0 - level);
    let mut params = Vec::with_capacity(k);
    for (j, name) in parameter_names(p).into_iter().enumerate() {
        let mut col: Vec<f64> = chunks.iter().flat_map(|c| c[j].iter().copied()).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        col.sort_by(f64::total_cmp);
        params.push(ParamSummary {
            name,
            mean,
            lo: sorted_quantile(&col, tail),
            hi: sorted_quantile(&col, 1.0 - tail),
        });
    }
    Ok(PosteriorSummary {
        params,
        samples,
        seed,
        level,
        delta_mean_exact: post.bgn.delta_marginal().mean()?,
    })
}
