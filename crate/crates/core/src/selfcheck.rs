//! Randomized identity suite: every closed form is checked against an
//! independent evaluation on small random instances.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::balanced::{
    marginal_log_likelihood, posterior, prior_log_pdf, sigma_u2_from_delta, suff_stats, BalancedDataset,
    ModelParams, PriorHyper, SufficientStats,
};
use crate::error::Result;
use crate::evidence::{log_evidence, log_evidence_general};
use crate::general::{
    general_stats, rel_gap, sigma_kron_ops, verify_quadratic_decomposition, woodbury_beta_covariance, GeneralDesign,
};
use crate::numkernel::{sample_std_normal, sample_uniform, RngStream, SpdMatrix};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Deliberate corruption used to confirm that the suite catches errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Fault {
    #[default]
    None,
    /// Negates `κ2` in the posterior before it is evaluated.
    FlipKappa2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub max_gap: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfCheckReport {
    pub seed: u64,
    pub trials: usize,
    pub fault: Fault,
    pub checks: Vec<IdentityCheck>,
}

impl SelfCheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const DEFAULT_TOLERANCE: f64 = 1e-8;

fn uniform(rng: &mut dyn RngCore, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * sample_uniform(rng)
}

fn int(rng: &mut dyn RngCore, lo: usize, hi: usize) -> usize {
    lo + (rng.next_u64() % (hi - lo + 1) as u64) as usize
}

fn normal_vec(rng: &mut dyn RngCore, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| sample_std_normal(rng))
}

/// Random balanced dataset with intercept plus normal covariates.
pub fn random_balanced(rng: &mut dyn RngCore, max_n: usize, max_w: usize, max_p: usize) -> Result<BalancedDataset> {
    let p = int(rng, 1, max_p);
    let n = int(rng, p + 1, max_n.max(p + 1));
    let w = int(rng, 2, max_w.max(2));
    let mut x = DMatrix::from_element(n, p, 1.0);
    for i in 0..n {
        for j in 1..p {
            x[(i, j)] = sample_std_normal(rng);
        }
    }
    let beta = normal_vec(rng, p);
    let mut y = DMatrix::zeros(n, w);
    for i in 0..n {
        let u = uniform(rng, 0.2, 2.0) * sample_std_normal(rng);
        let m = (x.row(i) * &beta)[0] + u;
        for t in 0..w {
            y[(i, t)] = m + uniform(rng, 0.5, 2.0) * sample_std_normal(rng);
        }
    }
    BalancedDataset::new(y, x)
}

pub fn random_hyper(rng: &mut dyn RngCore, p: usize) -> PriorHyper {
    PriorHyper::zellner(
        uniform(rng, 0.1, 0.9),
        uniform(rng, -1.0, 3.0).exp(),
        uniform(rng, -1.0, 1.5).exp(),
        uniform(rng, -1.0, 3.0).exp(),
        normal_vec(rng, p),
        uniform(rng, -2.0, 2.0).exp(),
    )
}

pub fn random_params(rng: &mut dyn RngCore, p: usize) -> ModelParams {
    ModelParams {
        delta: uniform(rng, 0.01, 0.99),
        sigma2: uniform(rng, -1.0, 1.5).exp(),
        beta: normal_vec(rng, p) * 1.5,
    }
}

/// Random unbalanced design with `N <= max_total`.
pub fn random_general(rng: &mut dyn RngCore, max_total: usize) -> Result<GeneralDesign> {
    let p = int(rng, 1, 3);
    let q = int(rng, 1, 2);
    let n = int(rng, p + 1, 6);
    let cap = (max_total / n).clamp(1, 4);
    let w = (0..n).map(|_| int(rng, 1, cap)).collect();
    let z = (0..n)
        .map(|_| {
            let mut v = normal_vec(rng, q);
            v[0] = 1.0;
            v
        })
        .collect();
    let mut x = DMatrix::from_element(n, p, 1.0);
    for i in 0..n {
        for j in 1..p {
            x[(i, j)] = sample_std_normal(rng);
        }
    }
    let l = DMatrix::from_fn(q, q, |_, _| sample_std_normal(rng));
    let lambda = SpdMatrix::new(&l * l.transpose() + DMatrix::identity(q, q) * 0.1)?;
    Ok(GeneralDesign {
        w,
        z,
        x,
        lambda,
        sigma2: uniform(rng, -1.0, 1.0).exp(),
        beta: normal_vec(rng, p),
    })
}

/// The balanced model written as a general design with scalar random effects.
pub fn balanced_as_general(s: &SufficientStats, x: &DMatrix<f64>, m: &ModelParams) -> Result<GeneralDesign> {
    let ratio = sigma_u2_from_delta(m.delta, m.sigma2, s.w) / m.sigma2;
    Ok(GeneralDesign {
        w: vec![s.w; s.n],
        z: vec![DVector::from_element(1, 1.0); s.n],
        x: x.clone(),
        lambda: SpdMatrix::new(DMatrix::from_element(1, 1, ratio))?,
        sigma2: m.sigma2,
        beta: m.beta.clone(),
    })
}

/// Dense multivariate-normal log-density of the stacked observations.
pub fn dense_log_likelihood(d: &BalancedDataset, m: &ModelParams) -> Result<f64> {
    let s = suff_stats(d)?;
    let g = balanced_as_general(&s, &d.x, m)?;
    let sigma = SpdMatrix::new(sigma_kron_ops(&g)?.sigma)?;
    let y = DVector::from_iterator(s.n * s.w, d.y.transpose().iter().copied());
    let r = &y - g.k() * (&d.x * &m.beta);
    let big_n = (s.n * s.w) as f64;
    Ok(-0.5 * big_n * (LN_2PI + m.sigma2.ln()) - 0.5 * sigma.logdet() - 0.5 * sigma.inv_quad_form(&r)? / m.sigma2)
}

/// `ln prior + ln likelihood - ln C - ln posterior`, relative to the largest term.
pub fn conjugacy_gap(s: &SufficientStats, h: &PriorHyper, m: &ModelParams, fault: Fault) -> Result<f64> {
    let mut post = posterior(s, h)?;
    if fault == Fault::FlipKappa2 {
        post.bgn.kappa2 = -post.bgn.kappa2;
    }
    let lp = prior_log_pdf(h, m, s)?;
    let ll = marginal_log_likelihood(s, m)?;
    let lc = log_evidence(s, h)?;
    let lq = post.log_pdf(m)?;
    let scale = [lp, ll, lc, lq].iter().fold(1.0f64, |a, v| a.max(v.abs()));
    Ok((lp + ll - lc - lq).abs() / scale)
}

#[derive(Default)]
struct Gaps(Vec<(&'static str, f64)>);

impl Gaps {
    fn record(&mut self, name: &'static str, gap: Result<f64>) {
        let g = match gap {
            Ok(v) if v.is_finite() => v,
            Ok(_) => f64::INFINITY,
            Err(e) => {
                log::debug!("{name}: {e}");
                f64::INFINITY
            }
        };
        match self.0.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = slot.1.max(g),
            None => self.0.push((name, g)),
        }
    }
}

/// Runs `trials` random instances of each identity.
pub fn run_selfcheck(seed: u64, trials: usize, fault: Fault) -> Result<SelfCheckReport> {
    let mut rng = RngStream::new(seed, 0).generator();
    let rng: &mut dyn RngCore = &mut rng;
    let mut gaps = Gaps::default();
    for _ in 0..trials {
        let d = random_balanced(rng, 8, 4, 3)?;
        let s = suff_stats(&d)?;
        let h = random_hyper(rng, s.p);
        let m = random_params(rng, s.p);

        gaps.record(
            "marginal_likelihood",
            dense_log_likelihood(&d, &m).and_then(|dense| Ok(rel_gap(dense, marginal_log_likelihood(&s, &m)?))),
        );
        gaps.record("conjugacy", conjugacy_gap(&s, &h, &m, fault));
        gaps.record(
            "evidence_paths",
            log_evidence(&s, &h).and_then(|a| Ok(rel_gap(a, log_evidence_general(&s, &h)?))),
        );
        gaps.record(
            "balanced_reduction",
            balanced_reduction_gap(&d, &s, &m),
        );

        let g = random_general(rng, 24)?;
        let y = g.simulate_y(rng);
        let ops = sigma_kron_ops(&g)?;
        let dense = ops.dense_gaps();
        gaps.record("woodbury_inverse", dense.clone().map(|x| x.inverse));
        gaps.record("determinant_lemma", dense.map(|x| x.logdet));
        gaps.record("g_matrix", g_matrix_gap(&g));
        let betas: Vec<_> = (0..3).map(|_| normal_vec(rng, g.p()) * 2.0).collect();
        match verify_quadratic_decomposition(&g, &y, &betas) {
            Ok(r) => {
                gaps.record("quadratic_decomposition", Ok(r.max_gap));
                gaps.record("cross_terms", Ok(r.max_cross_term));
            }
            Err(e) => {
                gaps.record("quadratic_decomposition", Err(e.clone()));
                gaps.record("cross_terms", Err(e));
            }
        }
        gaps.record("beta_covariance", woodbury_beta_covariance(&g).map(|c| c.gap));
    }
    let checks = gaps
        .0
        .into_iter()
        .map(|(name, max_gap)| IdentityCheck {
            name: name.to_string(),
            max_gap,
            tolerance: DEFAULT_TOLERANCE,
            passed: max_gap <= DEFAULT_TOLERANCE,
        })
        .collect();
    Ok(SelfCheckReport {
        seed,
        trials,
        fault,
        checks,
    })
}

// In the balanced scalar case the general statistics collapse: β̂_Λ = β̂_w = β̂,
// rho = 1 - δ, and the general Q1, Q2 equal the balanced ones.
fn balanced_reduction_gap(d: &BalancedDataset, s: &SufficientStats, m: &ModelParams) -> Result<f64> {
    let g = balanced_as_general(s, &d.x, m)?;
    let y = DVector::from_iterator(s.n * s.w, d.y.transpose().iter().copied());
    let st = general_stats(&g, &y)?;
    let beta_gap = (&st.beta_lambda - &s.beta_ols).amax().max((&st.beta_w - &s.beta_ols).amax())
        / s.beta_ols.amax().max(1.0);
    Ok(beta_gap
        .max(rel_gap(st.rho, 1.0 - m.delta))
        .max(rel_gap(st.q1, s.q1))
        .max(rel_gap(st.q2, s.q2)))
}

// G from the Woodbury form against W - KᵗΣ⁻¹K from a dense inverse.
fn g_matrix_gap(g: &GeneralDesign) -> Result<f64> {
    let ops = sigma_kron_ops(g)?;
    let k = g.k();
    let dense_inv = SpdMatrix::new(ops.sigma)?.inverse();
    let dense_g = g.w_matrix() - k.transpose() * dense_inv.matrix() * &k;
    let y = g.simulate_y(&mut RngStream::new(0, 0).generator());
    let st = general_stats(g, &y)?;
    let scale = dense_g.amax().max(st.g.amax()).max(f64::MIN_POSITIVE);
    Ok((dense_g - st.g).amax() / scale)
}
