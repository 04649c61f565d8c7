//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use bgnmix::balanced::{BalancedDataset, PriorHyper, PriorPrecision};
use bgnmix::numkernel::{log_gamma, RngStream};
use nalgebra::{DMatrix, DVector};
use rand::RngCore;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn lse(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// `ln ∫₀¹ exp(f(x, 1-x)) dx` by tanh-sinh quadrature with step `h`.
///
/// `f` receives both `x` and `1 - x` computed without cancellation.
pub fn tanh_sinh_log(f: impl Fn(f64, f64) -> f64, h: f64) -> f64 {
    let k = (6.5 / h).ceil() as i64;
    lse((-k..=k).map(|i| {
        let t = i as f64 * h;
        let u = std::f64::consts::PI * t.sinh();
        let (lx, l1x) = (-softplus(-u), -softplus(u));
        let (x, x1) = (lx.exp(), l1x.exp());
        if x == 0.0 || x1 == 0.0 {
            return f64::NEG_INFINITY;
        }
        let lw = h.ln() + lx + l1x + (std::f64::consts::PI * t.cosh()).ln();
        lw + f(x, x1)
    }))
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-12 * (1.0 + a.abs()) {
            break;
        }
    }
    0.5 * (a + b)
}

/// `ln ∫ exp(f)` over `[lo, hi]` for a unimodal log-integrand: locate the
/// mode, measure its curvature, then apply the trapezoid rule outward until
/// the integrand is negligible.
pub fn line_log_integral(f: impl Fn(f64) -> f64, lo: f64, hi: f64, steps_per_sd: f64) -> f64 {
    let m = golden_max(&f, lo, hi);
    let fm = f(m);
    let e = 1e-4 * (1.0 + m.abs());
    let curv = -(f(m + e) - 2.0 * fm + f(m - e)) / (e * e);
    let sd = if curv > 0.0 { 1.0 / curv.sqrt() } else { (hi - lo) / 200.0 };
    let step = sd / steps_per_sd;
    let mut vals = vec![fm];
    for dir in [-1.0, 1.0] {
        let mut x = m;
        loop {
            x += dir * step;
            if x < lo || x > hi {
                break;
            }
            let v = f(x);
            vals.push(v);
            if v < fm - 60.0 {
                break;
            }
        }
    }
    lse(vals) + step.ln()
}

/// Dense `nw`-variate normal log-density with covariance
/// `σ²(I + r·blockdiag(11ᵗ))`, `r = σu²/σ²`, factorized by Cholesky.
pub fn dense_mvn_loglik(d: &BalancedDataset, sigma2: f64, sigma_u2: f64, beta: &DVector<f64>) -> f64 {
    let (n, w) = (d.n(), d.w());
    let big = n * w;
    let mut cov = DMatrix::<f64>::identity(big, big) * sigma2;
    for i in 0..n {
        for s in 0..w {
            for t in 0..w {
                cov[(i * w + s, i * w + t)] += sigma_u2;
            }
        }
    }
    let mean = &d.x * beta;
    let r = DVector::from_fn(big, |k, _| d.y[(k / w, k % w)] - mean[k / w]);
    let chol = cov.cholesky().expect("covariance is SPD");
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let quad = r.dot(&chol.solve(&r));
    -0.5 * (big as f64 * LN_2PI + logdet + quad)
}

/// Same density through per-group Sherman–Morrison, for fast inner loops.
pub fn group_loglik(d: &BalancedDataset, tau: f64, delta: f64, one_m: f64, beta: &DVector<f64>) -> f64 {
    let (n, w) = (d.n(), d.w());
    let wf = w as f64;
    // within a group: σ²(I + r11ᵗ), with 1 + wr = 1/(1-δ)
    let r = delta / (wf * one_m);
    let mut total = 0.0;
    for i in 0..n {
        let mean: f64 = (0..d.p()).map(|j| d.x[(i, j)] * beta[j]).sum();
        let (mut ss, mut sum) = (0.0, 0.0);
        for t in 0..w {
            let e = d.y[(i, t)] - mean;
            ss += e * e;
            sum += e;
        }
        let quad = tau * (ss - r / (1.0 + wf * r) * sum * sum);
        total += -0.5 * wf * LN_2PI + 0.5 * wf * tau.ln() + 0.5 * one_m.ln() - 0.5 * quad;
    }
    total
}

/// Prior log-density at `(δ, 1-δ, τ = 1/σ², β)` written out term by term,
/// with the constant parts evaluated once.
pub fn prior_oracle(h: &PriorHyper, d: &BalancedDataset) -> impl Fn(f64, f64, f64, &DVector<f64>) -> f64 {
    let (a, b) = (h.nu1 * h.mu1, h.nu1 * (1.0 - h.mu1));
    let lbeta = log_gamma(a).unwrap() + log_gamma(b).unwrap() - log_gamma(a + b).unwrap();
    let rate = h.nu2 / h.mu2;
    let lg_nu2 = log_gamma(h.nu2).unwrap();
    let p = d.p() as f64;
    let upsilon = match &h.precision {
        PriorPrecision::Zellner(nu3) => d.x.transpose() * &d.x * (*nu3 / d.n() as f64),
        PriorPrecision::Explicit(m) => m.matrix().clone(),
    };
    let chol = upsilon.clone().cholesky().unwrap();
    let logdet_u = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let (nu2, beta0, w) = (h.nu2, h.beta0.clone(), d.w() as f64);
    move |delta, one_m, tau, beta| {
        let lp_delta = (a - 1.0) * delta.ln() + (b - 1.0) * one_m.ln() - lbeta;
        let lp_tau = nu2 * rate.ln() - lg_nu2 + (nu2 - 1.0) * tau.ln() - rate * tau;
        // precision c·Υ with c = w(1-δ)τ, kept in log space so tiny c stays finite
        let log_c = w.ln() + one_m.ln() + tau.ln();
        let diff = beta - &beta0;
        let quad = log_c.exp() * diff.dot(&(&upsilon * &diff));
        let lp_beta = -0.5 * p * LN_2PI + 0.5 * (logdet_u + p * log_c) - 0.5 * quad;
        lp_delta + lp_tau + lp_beta
    }
}

/// `ln ∫∫∫ f(δ, 1-δ, τ, β) dβ dτ dδ` for `p = 1`, with `τ = e^v`.
pub fn nested_log_integral(f: impl Fn(f64, f64, f64, f64) -> f64, h_delta: f64) -> f64 {
    tanh_sinh_log(
        |delta, one_m| {
            line_log_integral(
                |v| {
                    let tau = v.exp();
                    v + line_log_integral(|b| f(delta, one_m, tau, b), -1e4, 1e4, 4.0)
                },
                -60.0,
                40.0,
                4.0,
            )
        },
        h_delta,
    )
}

/// `ln C` by brute-force quadrature of prior × likelihood (`p = 1`).
pub fn evidence_by_quadrature(d: &BalancedDataset, h: &PriorHyper) -> f64 {
    assert_eq!(d.p(), 1);
    let prior = prior_oracle(h, d);
    nested_log_integral(
        |delta, one_m, tau, b| {
            let beta = DVector::from_element(1, b);
            prior(delta, one_m, tau, &beta) + group_loglik(d, tau, delta, one_m, &beta)
        },
        1.0 / 8.0,
    )
}

pub fn rng(seed: u64) -> rand_chacha::ChaCha20Rng {
    RngStream::new(seed, 9_999).generator()
}

pub fn uniform(rng: &mut dyn RngCore, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * bgnmix::numkernel::sample_uniform(rng)
}

/// Kolmogorov–Smirnov distance of `draws` from `cdf`.
pub fn ks_distance(mut draws: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    draws
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max((i as f64 + 1.0) / n - c)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 99% critical value of the one-sample KS statistic.
pub fn ks_critical_99(n: usize) -> f64 {
    1.627_6 / (n as f64).sqrt()
}
