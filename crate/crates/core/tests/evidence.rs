mod common;

use bgnmix::balanced::{
    marginal_log_likelihood, posterior, prior_log_pdf, suff_stats, BalancedDataset, ModelParams, PriorHyper,
};
use bgnmix::evidence::{empirical_bayes, log_evidence, log_evidence_general, EbConfig};
use bgnmix::selfcheck::{random_balanced, random_hyper, random_params};
use common::*;
use nalgebra::{DMatrix, DVector};

fn tiny() -> BalancedDataset {
    BalancedDataset::new(
        DMatrix::from_row_slice(3, 2, &[0.3, 1.1, 2.4, 1.7, -0.6, 0.2]),
        DMatrix::from_element(3, 1, 1.0),
    )
    .unwrap()
}

#[test]
fn closed_form_matches_nested_quadrature() {
    let d = tiny();
    let s = suff_stats(&d).unwrap();
    for h in [
        PriorHyper::zellner(0.5, 4.0, 1.0, 2.0, DVector::from_element(1, 0.0), 1.0),
        PriorHyper::zellner(0.3, 6.0, 0.7, 3.0, DVector::from_element(1, 0.8), 0.2),
    ] {
        let closed = log_evidence(&s, &h).unwrap();
        let brute = evidence_by_quadrature(&d, &h);
        assert!((closed - brute).abs() <= 1e-3 * closed.abs(), "closed {closed} brute {brute}");
    }
}

#[test]
fn general_and_zellner_paths_agree_on_random_instances() {
    let mut r = rng(1);
    for _ in 0..30 {
        let d = random_balanced(&mut r, 8, 4, 3).unwrap();
        let s = suff_stats(&d).unwrap();
        let h = random_hyper(&mut r, s.p);
        let a = log_evidence(&s, &h).unwrap();
        let b = log_evidence_general(&s, &h).unwrap();
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} {b}");
        // the 2F1 third parameter is φ2 + φ3 = n/2 + ν1
        let post = posterior(&s, &h).unwrap();
        assert!((post.bgn.phi2 + post.bgn.phi3 - (s.n as f64 / 2.0 + h.nu1)).abs() < 1e-12);
    }
}

#[test]
fn evidence_identity_is_constant_in_theta() {
    let mut r = rng(2);
    for _ in 0..10 {
        let d = random_balanced(&mut r, 8, 4, 3).unwrap();
        let s = suff_stats(&d).unwrap();
        let h = random_hyper(&mut r, s.p);
        let post = posterior(&s, &h).unwrap();
        let lc = log_evidence(&s, &h).unwrap();
        let implied: Vec<f64> = (0..20)
            .map(|_| {
                let m: ModelParams = random_params(&mut r, s.p);
                prior_log_pdf(&h, &m, &s).unwrap() + marginal_log_likelihood(&s, &m).unwrap() - post.log_pdf(&m).unwrap()
            })
            .collect();
        for v in implied {
            assert!((v - lc).abs() <= 1e-8 * lc.abs().max(1.0), "{v} {lc}");
        }
    }
}

#[test]
fn finite_over_the_default_box() {
    let mut r = rng(3);
    for _ in 0..20 {
        let d = random_balanced(&mut r, 8, 4, 3).unwrap();
        let s = suff_stats(&d).unwrap();
        for _ in 0..25 {
            let nu = [0; 3].map(|_| uniform(&mut r, (1e-3f64).ln(), (1e6f64).ln()).exp());
            let h = PriorHyper::zellner(0.5, nu[0], 1.0, nu[1], DVector::zeros(s.p), nu[2]);
            let v = log_evidence(&s, &h).unwrap();
            assert!(v.is_finite(), "{nu:?}");
        }
    }
}

#[test]
fn large_phi1_and_ratio_near_one() {
    // φ1 = nw/2 + ν2 near 10³ and κ2/κ1 close to 1
    let n = 100;
    let y = DMatrix::from_fn(n, 4, |i, t| 50.0 * ((i % 2) as f64) + 1e-3 * t as f64);
    let d = BalancedDataset::new(y, DMatrix::from_element(n, 1, 1.0)).unwrap();
    let s = suff_stats(&d).unwrap();
    let h = PriorHyper::zellner(0.5, 2.0, 1.0, 800.0, DVector::zeros(1), 1.0);
    let post = posterior(&s, &h).unwrap();
    assert!(post.bgn.phi1 >= 1000.0);
    assert!(post.bgn.kappa2 / post.bgn.kappa1 > 0.99);
    assert!(log_evidence(&s, &h).unwrap().is_finite());
}

#[test]
fn ols_center_makes_evidence_increase_with_nu3() {
    let mut r = rng(4);
    let d = random_balanced(&mut r, 8, 4, 3).unwrap();
    let s = suff_stats(&d).unwrap();
    let mut prev = f64::NEG_INFINITY;
    for k in 0..40 {
        let nu3 = 10f64.powf(-3.0 + 9.0 * k as f64 / 39.0);
        let h = PriorHyper::zellner(0.5, 2.0, 1.0, 1.0, s.beta_ols.clone(), nu3);
        assert_eq!(posterior(&s, &h).unwrap().q3, 0.0);
        let v = log_evidence(&s, &h).unwrap();
        assert!(v > prev);
        prev = v;
    }
}

#[test]
fn eb_beats_random_probes() {
    let mut r = rng(5);
    for _ in 0..10 {
        let d = random_balanced(&mut r, 8, 4, 3).unwrap();
        let s = suff_stats(&d).unwrap();
        let cfg = EbConfig::new(s.p);
        let fit = empirical_bayes(&s, &cfg).unwrap();
        for _ in 0..100 {
            let nu = cfg.bounds().map(|(lo, hi)| uniform(&mut r, lo.ln(), hi.ln()).exp());
            let probe = log_evidence(&s, &cfg.hyper(nu)).unwrap();
            assert!(fit.log_evidence >= probe - 1e-9 * probe.abs(), "{} < {probe} at {nu:?}", fit.log_evidence);
        }
    }
}

#[test]
fn eb_is_deterministic_and_respects_nu1_box() {
    let mut r = rng(6);
    let d = random_balanced(&mut r, 8, 4, 3).unwrap();
    let s = suff_stats(&d).unwrap();
    let mut cfg = EbConfig::new(s.p);
    cfg.nu1_bounds = (2.0, 2.001);
    let a = empirical_bayes(&s, &cfg).unwrap();
    assert!((2.0..=2.001).contains(&a.hyper.nu1));
    assert_eq!(a, empirical_bayes(&s, &cfg).unwrap());
}
