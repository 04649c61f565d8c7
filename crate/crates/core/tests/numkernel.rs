mod common;

use bgnmix::numkernel::*;
use common::*;
use proptest::prelude::*;

/// Direct power series, for `|z| < 1/2` where it converges quickly.
fn series_2f1(a: f64, b: f64, c: f64, z: f64) -> f64 {
    let (mut term, mut sum) = (1.0, 1.0);
    for k in 0..2000 {
        let k = k as f64;
        term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * z;
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

#[test]
fn log_2f1_matches_power_series() {
    for &a in &[0.3, 1.0, 2.5, 7.0] {
        for &b in &[0.0, 0.5, 3.0, 20.0] {
            for &dc in &[0.4, 1.0, 6.0] {
                for &z in &[0.0, 0.05, 0.1, 0.3, 0.45] {
                    let c = a + dc;
                    let want = series_2f1(a, b, c, z).ln();
                    let got = log_2f1(a, b, c, z).unwrap();
                    assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{a} {b} {c} {z}: {got} vs {want}");
                }
            }
        }
    }
}

#[test]
fn log_2f1_closed_forms_near_the_branch_point() {
    // 2F1(1, 1; 2; z) = -ln(1-z)/z
    for &z in &[0.5, 0.9, 0.99, 0.999] {
        let want = (-(-z as f64).ln_1p() / z).ln();
        let got = log_2f1(1.0, 1.0, 2.0, z).unwrap();
        assert!((got - want).abs() <= 1e-9 * want.abs(), "{z}");
    }
    // 2F1(1, b; 2; z) = ((1-z)^{1-b} - 1) / ((b-1) z), up to b = 1e4
    for &b in &[3.0, 50.0, 1e3, 1e4] {
        for &z in &[0.3, 0.9, 0.999] {
            let l1z = (-z as f64).ln_1p();
            let want = (1.0 - b) * l1z + (-((b - 1.0) * l1z).exp()).ln_1p() - ((b - 1.0) * z).ln();
            let got = log_2f1(1.0, b, 2.0, z).unwrap();
            assert!((got - want).abs() <= 1e-9 * want.abs(), "b={b} z={z}: {got} vs {want}");
        }
    }
}

#[test]
fn log_2f1_rejects_bad_arguments() {
    assert!(log_2f1(1.0, 1.0, 1.0, 0.5).is_err());
    assert!(log_2f1(1.0, 1.0, 2.0, 1.0).is_err());
    assert!(log_2f1(-1.0, 1.0, 2.0, 0.5).is_err());
    assert!(log_2f1(1.0, 1.0, 2.0, -0.5).is_err());
    assert!(log_2f1(1.0, 1.0, 2.0, f64::NAN).is_err());
}

#[test]
fn quantiles_match_closed_forms() {
    for &p in &[0.001, 0.025, 0.3, 0.5, 0.8, 0.975, 0.999] {
        let close = |got: f64, want: f64| (got - want).abs() <= 1e-9 * want.abs().max(1.0);
        assert!(close(quantile_chi2(2.0, p).unwrap(), -2.0 * (-p as f64).ln_1p()));
        assert!(close(quantile_t(1.0, p).unwrap(), (std::f64::consts::PI * (p - 0.5)).tan()));
        assert!(close(quantile_f(2.0, 2.0, p).unwrap(), p / (1.0 - p)));
        assert!(close(quantile_gamma(1.0, 3.0, p).unwrap(), -(-p as f64).ln_1p() / 3.0));
        assert!(close(quantile_beta(1.0, 4.0, p).unwrap(), 1.0 - (1.0 - p).powf(0.25)));
    }
    // tiny shapes: P(a, x) ≈ x^a / Γ(a+1) near zero
    assert_eq!(quantile_gamma(1e-3, 1.0, 0.05).unwrap(), 0.0); // 0.05^1000 underflows
    for &a in &[0.01, 0.05, 0.2] {
        let x = quantile_gamma(a, 1.0, 0.05).unwrap();
        assert!(x > 0.0 && (cdf_gamma(a, 1.0, x).unwrap() - 0.05).abs() < 1e-10, "shape {a}: {x}");
        assert!(quantile_chi2(2.0 * a, 0.95).unwrap() > 0.0);
    }
    assert!((quantile_normal(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-12);
    assert!((cdf_normal(1.959_963_984_540_054) - 0.975).abs() < 1e-14);
}

#[test]
fn quadrature_on_known_integrals() {
    let spec = QuadratureSpec::default();
    let close = |log_v: f64, want: f64| (log_v.exp() - want).abs() < 1e-10 * want;
    assert!(close(integrate(|x: f64| x.sin().ln(), 0.0, std::f64::consts::PI, &spec).unwrap(), 2.0));
    assert!(close(integrate(|x| -x * x, -8.0, 8.0, &spec).unwrap(), std::f64::consts::PI.sqrt()));
    assert!(close(
        integrate(|x: f64| -(x * x).ln_1p(), 0.0, 1.0, &spec).unwrap(),
        std::f64::consts::FRAC_PI_4
    ));
    // integrable endpoint singularity
    assert!(close(integrate(|x: f64| -0.5 * x.ln(), 0.0, 1.0, &spec).unwrap(), 2.0));
    // a log-integrand far outside floating-point range
    let v = integrate(|x| 5000.0 - x * x, -8.0, 8.0, &spec).unwrap();
    assert!((v - 5000.0 - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-10 * 5000.0);
}

#[test]
fn log_sum_exp_is_shift_stable() {
    let v = [1000.0, 1000.0, 999.0];
    let want = 1000.0 + (2.0 + (-1.0f64).exp()).ln();
    assert!((log_sum_exp(&v) - want).abs() < 1e-12);
    assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
}

#[test]
fn streams_are_reproducible_and_distinct() {
    let draw = |s: RngStream| {
        let mut r = s.generator();
        (0..8).map(|_| sample_uniform(&mut r)).collect::<Vec<_>>()
    };
    let a = RngStream::new(7, 3);
    assert_eq!(draw(a.clone()), draw(RngStream::new(7, 3)));
    assert_ne!(draw(a.clone()), draw(RngStream::new(7, 4)));
    assert_ne!(draw(a.clone()), draw(RngStream::new(8, 3)));
    assert_ne!(draw(a.substream(0)), draw(a.substream(1)));
    assert_eq!(draw(a.substream(5)), draw(RngStream::new(7, 3).substream(5)));
}

#[test]
fn gamma_and_normal_samplers_have_the_right_moments() {
    let mut r = rng(11);
    let m = 200_000;
    let (shape, rate) = (2.5, 4.0);
    let g: Vec<f64> = (0..m).map(|_| sample_gamma(shape, rate, &mut r).unwrap()).collect();
    let mean = g.iter().sum::<f64>() / m as f64;
    let se = (shape / (rate * rate) / m as f64).sqrt();
    assert!((mean - shape / rate).abs() < 4.0 * se);
    assert!(ks_distance(g, |x| cdf_gamma(shape, rate, x).unwrap()) < ks_critical_99(m));
    let z: Vec<f64> = (0..m).map(|_| sample_std_normal(&mut r)).collect();
    assert!(ks_distance(z, cdf_normal) < ks_critical_99(m));
}

proptest! {
    #[test]
    fn beta_quantile_inverts_cdf(a in 0.3f64..20.0, b in 0.3f64..20.0, p in 0.001f64..0.999) {
        let x = quantile_beta(a, b, p).unwrap();
        prop_assert!((cdf_beta(a, b, x).unwrap() - p).abs() < 1e-9);
    }

    #[test]
    fn log_2f1_is_symmetric_in_its_first_two_arguments(
        a in 0.2f64..8.0, b in 0.2f64..8.0, dc in 0.2f64..5.0, z in 0.0f64..0.99
    ) {
        let c = a.max(b) + dc;
        let x = log_2f1(a, b, c, z).unwrap();
        let y = log_2f1(b, a, c, z).unwrap();
        prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
    }
}
