//! Model evidence and empirical-Bayes choice of `(ν1, ν2, ν3)`.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::balanced::{posterior, PriorHyper, PriorPrecision, SufficientStats};
use crate::error::{domain, Error, Result};
use crate::numkernel::{log_2f1, log_beta, log_gamma};
use crate::optim::{nelder_mead, NelderMeadSpec};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

// Everything except the prior-precision determinant term, given Q3.
fn assemble(s: &SufficientStats, h: &PriorHyper, q3: f64, log_det_ratio: f64) -> Result<f64> {
    let (n, w) = (s.n as f64, s.w as f64);
    let phi1 = 0.5 * n * w + h.nu2;
    let phi2 = h.nu1 * h.mu1;
    let phi3 = 0.5 * n + h.nu1 * (1.0 - h.mu1);
    let kappa1 = 0.5 * (s.q1 + s.q2 + 2.0 * h.nu2 / h.mu2 + w * q3);
    let kappa2 = 0.5 * (s.q2 + w * q3);
    let (a0, b0) = h.delta_prior();
    let lambda = kappa2 / kappa1;
    if !(0.0..1.0).contains(&lambda) {
        return Err(domain(format!("kappa ratio {lambda} outside [0, 1)")));
    }
    Ok(-0.5 * n * w * LN_2PI + log_beta(phi2, phi3)? + log_2f1(phi2, phi1, phi2 + phi3, lambda)?
        - log_beta(a0, b0)?
        + h.nu2 * (h.nu2 / h.mu2).ln()
        - phi1 * kappa1.ln()
        + log_gamma(phi1)?
        - log_gamma(h.nu2)?
        + log_det_ratio)
}

/// `ln C`, the log marginal probability of the data.
///
/// Under the Zellner form `Υ0 = ν3 Mₙ` the closed form needs no matrix
/// factorization; an explicit `Υ0` goes through [`log_evidence_general`].
pub fn log_evidence(s: &SufficientStats, h: &PriorHyper) -> Result<f64> {
    h.validate(s.p)?;
    match h.precision {
        PriorPrecision::Zellner(nu3) => {
            let d = &s.beta_ols - &h.beta0;
            let fit = s.n_mn().quad_form(&d);
            zellner(s, h, nu3, fit)
        }
        PriorPrecision::Explicit(_) => log_evidence_general(s, h),
    }
}

fn zellner(s: &SufficientStats, h: &PriorHyper, nu3: f64, fit: f64) -> Result<f64> {
    let n = s.n as f64;
    let q3 = nu3 / (n + nu3) * fit;
    let det = 0.5 * s.p as f64 * (nu3.ln() - (n + nu3).ln());
    assemble(s, h, q3, det)
}

/// `ln C` through the general matrix route, for any prior precision.
pub fn log_evidence_general(s: &SufficientStats, h: &PriorHyper) -> Result<f64> {
    let post = posterior(s, h)?;
    let upsilon = h.upsilon0(s)?;
    let det = 0.5 * (upsilon.logdet() - post.precision.logdet());
    assemble(s, h, post.q3, det)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EbConfig {
    pub mu1: f64,
    pub mu2: f64,
    pub beta0: DVector<f64>,
    pub nu1_bounds: (f64, f64),
    pub nu2_bounds: (f64, f64),
    pub nu3_bounds: (f64, f64),
    pub restarts: usize,
    /// Convergence tolerance on the log-evidence.
    pub tolerance: f64,
    pub max_evals: usize,
}

pub const DEFAULT_NU_BOUNDS: (f64, f64) = (1e-3, 1e6);

impl EbConfig {
    /// Defaults: `μ1 = 1/2`, `μ2 = 1`, `β0 = 0`, every `ν` in `[1e-3, 1e6]`.
    pub fn new(p: usize) -> Self {
        Self {
            mu1: 0.5,
            mu2: 1.0,
            beta0: DVector::zeros(p),
            nu1_bounds: DEFAULT_NU_BOUNDS,
            nu2_bounds: DEFAULT_NU_BOUNDS,
            nu3_bounds: DEFAULT_NU_BOUNDS,
            restarts: 8,
            tolerance: 1e-9,
            max_evals: 3000,
        }
    }

    pub fn bounds(&self) -> [(f64, f64); 3] {
        [self.nu1_bounds, self.nu2_bounds, self.nu3_bounds]
    }

    pub fn validate(&self) -> Result<()> {
        for (i, (lo, hi)) in self.bounds().into_iter().enumerate() {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::Config(format!(
                    "nu{} bounds must satisfy 0 < lo <= hi, got [{lo}, {hi}]",
                    i + 1
                )));
            }
        }
        if self.restarts == 0 {
            return Err(Error::Config("need at least one optimizer start".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be > 0".into()));
        }
        Ok(())
    }

    pub fn hyper(&self, nu: [f64; 3]) -> PriorHyper {
        PriorHyper::zellner(self.mu1, nu[0], self.mu2, nu[1], self.beta0.clone(), nu[2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EbFit {
    pub hyper: PriorHyper,
    pub log_evidence: f64,
    pub converged: bool,
    pub evaluations: usize,
}

/// Maximizes the log-evidence over `(ν1, ν2, ν3)` in log coordinates.
///
/// Starts are deterministic; the winner is the best value, with ties going to
/// the lexicographically smallest `ν`. Non-convergence of every start is
/// logged, and the best point found is still returned.
pub fn empirical_bayes(s: &SufficientStats, cfg: &EbConfig) -> Result<EbFit> {
    cfg.validate()?;
    let template = cfg.hyper([1.0; 3]);
    template.validate(s.p)?;
    let d = &s.beta_ols - &cfg.beta0;
    let fit = s.n_mn().quad_form(&d);
    let objective = |theta: &[f64]| -> f64 {
        let nu = [theta[0].exp(), theta[1].exp(), theta[2].exp()];
        let mut h = template.clone();
        h.nu1 = nu[0];
        h.nu2 = nu[1];
        match zellner(s, &h, nu[2], fit) {
            Ok(v) if v.is_finite() => -v,
            _ => f64::INFINITY,
        }
    };
    let bounds = cfg.bounds();
    let lower: Vec<f64> = bounds.iter().map(|b| b.0.ln()).collect();
    let upper: Vec<f64> = bounds.iter().map(|b| b.1.ln()).collect();
    let spec = NelderMeadSpec {
        f_tol: cfg.tolerance,
        x_tol: 1e-7,
        max_evals: cfg.max_evals,
        initial_step: 0.05,
    };
    let starts = start_points(&lower, &upper, cfg.restarts);
    let runs: Vec<_> = starts
        .par_iter()
        .map(|x0| {
            let first = nelder_mead(objective, x0, &lower, &upper, &spec);
            // a fresh simplex at the optimum guards against premature collapse
            let second = nelder_mead(objective, &first.x, &lower, &upper, &spec);
            let evals = first.evals + second.evals;
            if second.value <= first.value {
                (second, evals)
            } else {
                (first, evals)
            }
        })
        .collect();
    let evaluations = runs.iter().map(|r| r.1).sum();
    let converged = runs.iter().any(|r| r.0.converged);
    let best = runs
        .into_iter()
        .map(|r| r.0)
        .min_by(|a, b| {
            a.value
                .total_cmp(&b.value)
                .then_with(|| lexicographic(&a.x, &b.x))
        })
        .expect("at least one start");
    if !best.value.is_finite() {
        return Err(Error::Optimizer {
            best_value: -best.value,
        });
    }
    if !converged {
        log::warn!("empirical Bayes search hit its evaluation limit; using the best point found");
    }
    let nu = [best.x[0].exp(), best.x[1].exp(), best.x[2].exp()];
    Ok(EbFit {
        hyper: cfg.hyper(nu),
        log_evidence: -best.value,
        converged,
        evaluations,
    })
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

// ν = 1 where the box allows it, then a Kronecker sequence through the box.
fn start_points(lower: &[f64], upper: &[f64], count: usize) -> Vec<Vec<f64>> {
    const STEPS: [f64; 3] = [0.618_033_988_749_894_8, 0.754_877_666_246_692_7, 0.569_840_290_998_053_3];
    (0..count)
        .map(|k| {
            lower
                .iter()
                .zip(upper)
                .enumerate()
                .map(|(i, (&lo, &hi))| {
                    if k == 0 {
                        0.0f64.clamp(lo, hi)
                    } else {
                        let frac = (0.5 + k as f64 * STEPS[i % 3]).fract();
                        lo + frac * (hi - lo)
                    }
                })
                .collect()
        })
        .collect()
}
