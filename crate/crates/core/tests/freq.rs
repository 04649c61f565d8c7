mod common;

use bgnmix::balanced::{suff_stats, BalancedDataset};
use bgnmix::freq::{fit_freq, fit_freq_with, VarianceInterval};
use bgnmix::numkernel::sample_std_normal;
use bgnmix::selfcheck::random_balanced;
use common::*;
use nalgebra::{DMatrix, DVector};

/// Restricted log-likelihood from the dense `nw × nw` covariance.
fn dense_reml(d: &BalancedDataset, sigma2: f64, sigma_u2: f64) -> f64 {
    let (n, w, p) = (d.n(), d.w(), d.p());
    let big = n * w;
    let v = DMatrix::from_fn(big, big, |a, b| {
        (if a == b { sigma2 } else { 0.0 }) + if a / w == b / w { sigma_u2 } else { 0.0 }
    });
    let x = DMatrix::from_fn(big, p, |a, j| d.x[(a / w, j)]);
    let y = DVector::from_fn(big, |a, _| d.y[(a / w, a % w)]);
    let cv = v.cholesky().unwrap();
    let vx = cv.solve(&x);
    let xvx = (x.transpose() * &vx).cholesky().unwrap();
    let beta = xvx.solve(&(x.transpose() * cv.solve(&y)));
    let r = &y - &x * beta;
    let logdet = |l: &DMatrix<f64>| 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (logdet(&cv.l()) + logdet(&xvx.l()) + r.dot(&cv.solve(&r)))
}

/// Grid search followed by repeated zooming, in log coordinates.
fn reml_oracle(d: &BalancedDataset) -> (f64, f64) {
    let f = |a: f64, b: f64| dense_reml(d, a.exp(), b.exp());
    let (mut ca, mut cb, mut ha, mut hb) = (0.0, -1.0, 6.0, 8.0);
    let k = 20;
    for _ in 0..40 {
        let mut best = (f64::NEG_INFINITY, ca, cb);
        for i in 0..=k {
            for j in 0..=k {
                let a = ca + ha * (2.0 * i as f64 / k as f64 - 1.0);
                let b = cb + hb * (2.0 * j as f64 / k as f64 - 1.0);
                let v = f(a, b);
                if v > best.0 {
                    best = (v, a, b);
                }
            }
        }
        (ca, cb) = (best.1, best.2);
        ha *= 0.5;
        hb *= 0.5;
    }
    (ca.exp(), cb.exp())
}

#[test]
fn anova_estimates_by_hand() {
    // intercept only, n = 3, w = 2
    let y = DMatrix::from_row_slice(3, 2, &[1.0, 3.0, 4.0, 6.0, 11.0, 13.0]);
    let d = BalancedDataset::new(y, DMatrix::from_element(3, 1, 1.0)).unwrap();
    let f = fit_freq(&suff_stats(&d).unwrap(), 0.95).unwrap();
    // group means 2, 5, 12 around 19/3; MSW = 6/3 = 2; MSB = 2 · (474/9) / 2 = 158/3
    assert!((f.sigma2_hat - 2.0).abs() < 1e-12);
    assert!((f.sigma_u2_hat - 76.0 / 3.0).abs() < 1e-12);
    assert!((f.beta_hat[0] - 19.0 / 3.0).abs() < 1e-12);
    assert!((f.delta_hat - 152.0 / 158.0).abs() < 1e-12);
    assert_eq!((f.df_within, f.df_between), (3, 2));
}

#[test]
fn interior_estimates_maximize_the_restricted_likelihood() {
    let mut r = rng(51);
    let mut checked = 0;
    while checked < 20 {
        let d = random_balanced(&mut r, 8, 4, 3).unwrap();
        let s = suff_stats(&d).unwrap();
        let f = fit_freq(&s, 0.95).unwrap();
        if f.sigma_u2_hat <= 0.0 {
            continue;
        }
        let (s2, su2) = reml_oracle(&d);
        assert!((s2 - f.sigma2_hat).abs() <= 1e-6 * f.sigma2_hat, "{s2} vs {}", f.sigma2_hat);
        assert!((su2 - f.sigma_u2_hat).abs() <= 1e-6 * f.sigma_u2_hat, "{su2} vs {}", f.sigma_u2_hat);
        for j in 0..s.p {
            assert_eq!(f.beta_hat[j], s.beta_ols[j]);
        }
        checked += 1;
    }
}

#[test]
fn exact_intervals_have_nominal_coverage() {
    let (n, w, reps) = (10, 3, 4000);
    let (sigma2, sigma_u2) = (2.0, 0.7);
    let delta = w as f64 * sigma_u2 / (sigma2 + w as f64 * sigma_u2);
    let mut r = rng(52);
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { i as f64 / n as f64 });
    let (mut hit_s2, mut hit_delta) = (0, 0);
    for _ in 0..reps {
        let y = DMatrix::from_fn(n, w, |_, _| 0.0);
        let mut y = y;
        for i in 0..n {
            let u = sigma_u2.sqrt() * sample_std_normal(&mut r);
            for t in 0..w {
                y[(i, t)] = 1.0 + x[(i, 1)] + u + sigma2.sqrt() * sample_std_normal(&mut r);
            }
        }
        let f = fit_freq(&suff_stats(&BalancedDataset::new(y, x.clone()).unwrap()).unwrap(), 0.95).unwrap();
        let s2 = f.get("sigma2").unwrap();
        hit_s2 += (s2.lo <= sigma2 && sigma2 <= s2.hi) as usize;
        let dl = f.get("delta").unwrap();
        hit_delta += (dl.lo <= delta && delta <= dl.hi) as usize;
    }
    let mcse = (0.95 * 0.05 / reps as f64).sqrt();
    for hits in [hit_s2, hit_delta] {
        let cov = hits as f64 / reps as f64;
        assert!((cov - 0.95).abs() <= 2.0 * mcse, "coverage {cov}");
    }
}

#[test]
fn truncation_and_interval_ordering() {
    let mut r = rng(53);
    let mut truncated = 0;
    for _ in 0..200 {
        let d = random_balanced(&mut r, 8, 4, 3).unwrap();
        let s = suff_stats(&d).unwrap();
        for method in [VarianceInterval::Mls, VarianceInterval::Satterthwaite] {
            let f = fit_freq_with(&s, 0.9, method).unwrap();
            assert!(f.sigma2_hat >= 0.0 && f.sigma_u2_hat >= 0.0);
            if s.q2 / (s.n - s.p) as f64 <= f.sigma2_hat {
                assert_eq!(f.sigma_u2_hat, 0.0);
                truncated += 1;
            }
            for iv in &f.intervals {
                assert!(iv.lo <= iv.hi, "{iv:?}");
            }
        }
    }
    assert!(truncated > 0);
}

#[test]
fn wald_intervals_use_the_larger_mean_square() {
    let mut r = rng(54);
    let d = random_balanced(&mut r, 8, 4, 2).unwrap();
    let s = suff_stats(&d).unwrap();
    let f = fit_freq(&s, 0.95).unwrap();
    let theta = f.sigma2_hat + s.w as f64 * f.sigma_u2_hat;
    let cov = (d.x.transpose() * &d.x).try_inverse().unwrap() * (theta / s.w as f64);
    let t = t_quantile_by_bisection(f.df_between as f64, 0.975);
    for j in 0..s.p {
        let iv = f.get(&format!("beta_{j}")).unwrap();
        let half = t * cov[(j, j)].sqrt();
        assert!((iv.hi - iv.lo - 2.0 * half).abs() <= 1e-10 * half);
    }
}

/// Student-t quantile by bisection on the regularized incomplete beta.
fn t_quantile_by_bisection(df: f64, p: f64) -> f64 {
    let cdf = |t: f64| {
        let x = df / (df + t * t);
        let tail = 0.5 * bgnmix::numkernel::cdf_beta(df / 2.0, 0.5, x).unwrap();
        if t >= 0.0 {
            1.0 - tail
        } else {
            tail
        }
    };
    let (mut lo, mut hi) = (-100.0, 100.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn rejects_missing_degrees_of_freedom() {
    let d = BalancedDataset::new(
        DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 5.0]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]),
    )
    .unwrap();
    assert!(fit_freq(&suff_stats(&d).unwrap(), 0.95).is_err());
    let d = random_balanced(&mut rng(55), 8, 4, 1).unwrap();
    assert!(fit_freq(&suff_stats(&d).unwrap(), 1.5).is_err());
}
