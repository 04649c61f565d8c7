//! Adaptive Gauss–Kronrod quadrature carried out on the log scale.
//!
//! Every integrand is supplied as its logarithm. Each panel is evaluated with
//! a 21-point Kronrod rule after shifting by the panel maximum, so integrands
//! whose values span hundreds of orders of magnitude (large exponents in the
//! generalized beta kernel, for instance) neither overflow nor underflow.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::special::log_sum_exp;

/// Tolerances for [`integrate`].
///
/// The subdivision stops once the estimated absolute error of the integral is
/// below `max(abs_tol, rel_tol * |I|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_subdivisions: 200,
        }
    }
}

impl QuadratureSpec {
    /// A purely relative criterion, for integrals whose magnitude is arbitrary.
    pub fn relative(rel_tol: f64, max_subdivisions: usize) -> Self {
        Self {
            abs_tol: f64::MIN_POSITIVE,
            rel_tol,
            max_subdivisions,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) || self.max_subdivisions < 1 {
            return Err(Error::Config(format!("invalid quadrature spec {self:?}")));
        }
        Ok(())
    }
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_703_079_500,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// 10-point Gauss weights, attached to the odd-indexed Kronrod nodes.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

const LN_FLOOR_HEADROOM: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    log_value: f64,
    log_error: f64,
    // attainable absolute accuracy given the magnitude of the log values
    log_floor: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.log_error.total_cmp(&other.log_error)
    }
}

fn eval_panel<F: Fn(f64) -> f64, M: Fn(f64) -> f64>(f: &F, magnitude: &M, lo: f64, hi: f64) -> Result<Panel> {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut logs = [0.0f64; 21];
    for (j, &x) in XGK.iter().enumerate() {
        if j == 10 {
            logs[20] = f(center);
        } else {
            logs[2 * j] = f(center - half * x);
            logs[2 * j + 1] = f(center + half * x);
        }
    }
    let mut max = f64::NEG_INFINITY;
    let mut argmax = 20;
    for (k, &v) in logs.iter().enumerate() {
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::Domain(format!(
                "integrand returned {v} on [{lo}, {hi}]"
            )));
        }
        if v > max {
            max = v;
            argmax = k;
        }
    }
    if max == f64::NEG_INFINITY {
        return Ok(Panel {
            lo,
            hi,
            log_value: f64::NEG_INFINITY,
            log_error: f64::NEG_INFINITY,
            log_floor: f64::NEG_INFINITY,
        });
    }
    let mut kronrod = WGK[10] * (logs[20] - max).exp();
    let mut gauss = 0.0;
    for j in 0..10 {
        let pair = (logs[2 * j] - max).exp() + (logs[2 * j + 1] - max).exp();
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let scale = max + half.ln();
    let diff = (kronrod - gauss).abs();
    // log values carry absolute roundoff ~ eps times the size of the terms
    // summed to form them, i.e. that much relative error after exp
    let node = if argmax == 20 {
        center
    } else if argmax % 2 == 0 {
        center - half * XGK[argmax / 2]
    } else {
        center + half * XGK[argmax / 2]
    };
    let floor = 50.0 * f64::EPSILON * (1.0 + max.abs().max(magnitude(node)));
    let err = diff.max(floor * kronrod);
    Ok(Panel {
        lo,
        hi,
        log_value: scale + kronrod.ln(),
        log_error: scale + err.ln(),
        log_floor: scale + (floor * kronrod).ln(),
    })
}

/// Adaptive integration of `exp(f)` over the union of panels delimited by the
/// sorted `breakpoints` (at least two entries). Returns the log of the integral.
pub(crate) fn integrate_breakpoints<F: Fn(f64) -> f64>(
    f: &F,
    breakpoints: &[f64],
    spec: &QuadratureSpec,
) -> Result<f64> {
    integrate_breakpoints_scaled(f, &|_| 0.0, breakpoints, spec)
}

/// As [`integrate_breakpoints`], with `magnitude(x)` bounding the absolute
/// size of the terms whose sum is `f(x)`, which sets the attainable accuracy.
pub(crate) fn integrate_breakpoints_scaled<F: Fn(f64) -> f64, M: Fn(f64) -> f64>(
    f: &F,
    magnitude: &M,
    breakpoints: &[f64],
    spec: &QuadratureSpec,
) -> Result<f64> {
    spec.validate()?;
    if breakpoints.len() < 2 {
        return Err(Error::Domain("need at least two breakpoints".into()));
    }
    let mut heap = BinaryHeap::new();
    for w in breakpoints.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::InvalidInterval { lo, hi });
        }
        if hi > lo {
            heap.push(eval_panel(f, magnitude, lo, hi)?);
        }
    }
    if heap.is_empty() {
        return Err(Error::InvalidInterval {
            lo: breakpoints[0],
            hi: breakpoints[breakpoints.len() - 1],
        });
    }
    // panels too narrow to split keep their error here
    let mut frozen_values: Vec<f64> = Vec::new();
    let mut frozen_errors: Vec<f64> = Vec::new();
    let mut frozen_floors: Vec<f64> = Vec::new();
    let log_abs_tol = spec.abs_tol.ln();
    let log_rel_tol = spec.rel_tol.ln();
    loop {
        let mut values: Vec<f64> = heap.iter().map(|p| p.log_value).collect();
        values.extend_from_slice(&frozen_values);
        let mut errors: Vec<f64> = heap.iter().map(|p| p.log_error).collect();
        errors.extend_from_slice(&frozen_errors);
        let log_value = log_sum_exp(&values);
        let log_error = log_sum_exp(&errors);
        let mut floors: Vec<f64> = heap.iter().map(|p| p.log_floor).collect();
        floors.extend_from_slice(&frozen_floors);
        // the floor is attained by panels individually, so allow headroom over the sum
        let log_floor = log_sum_exp(&floors) + LN_FLOOR_HEADROOM;
        let log_tol = log_abs_tol.max(log_rel_tol + log_value).max(log_floor);
        if log_error <= log_tol || log_value == f64::NEG_INFINITY {
            return Ok(log_value);
        }
        if heap.len() + frozen_values.len() >= spec.max_subdivisions {
            return Err(Error::Convergence {
                subdivisions: heap.len() + frozen_values.len(),
                log_estimate: log_value,
                rel_error: (log_error - log_value).exp(),
            });
        }
        let Some(worst) = heap.pop() else {
            return Err(Error::Convergence {
                subdivisions: frozen_values.len(),
                log_estimate: log_value,
                rel_error: (log_error - log_value).exp(),
            });
        };
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            frozen_values.push(worst.log_value);
            frozen_errors.push(worst.log_error);
            frozen_floors.push(worst.log_floor);
            continue;
        }
        heap.push(eval_panel(f, magnitude, worst.lo, mid)?);
        heap.push(eval_panel(f, magnitude, mid, worst.hi)?);
    }
}

/// `ln ∫_lo^hi exp(f(x)) dx` by adaptive bisection.
///
/// `f` must return a finite value or `-inf` on the open interval; the
/// endpoints themselves are never evaluated.
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, spec: &QuadratureSpec) -> Result<f64> {
    if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
        return Err(Error::InvalidInterval { lo, hi });
    }
    integrate_breakpoints(&f, &[lo, hi], spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_identity_and_constant() {
        let spec = QuadratureSpec::default();
        let v = integrate(|x: f64| x.ln(), 0.0, 1.0, &spec).unwrap();
        assert!((v - 0.5f64.ln()).abs() < 1e-12);
        let v = integrate(|_| 0.0, 0.0, 1.0, &spec).unwrap();
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn beta_density_normalizes() {
        // Beta(2,3) density 12 x (1-x)^2
        let spec = QuadratureSpec::default();
        let f = |x: f64| 12f64.ln() + x.ln() + 2.0 * (-x).ln_1p();
        let v = integrate(f, 0.0, 1.0, &spec).unwrap();
        assert!(v.abs() < 1e-10);
    }

    #[test]
    fn handles_huge_log_scale() {
        // ∫_0^1 exp(5000 x) dx = (e^5000 - 1)/5000
        let spec = QuadratureSpec::relative(1e-12, 200);
        let v = integrate(|x| 5000.0 * x, 0.0, 1.0, &spec).unwrap();
        let expected = 5000.0 - 5000f64.ln();
        assert!((v - expected).abs() < 1e-10, "{v} vs {expected}");
    }

    #[test]
    fn endpoint_singularity() {
        // ∫ x^{-1/2} = 2
        let spec = QuadratureSpec::default();
        let v = integrate(|x: f64| -0.5 * x.ln(), 0.0, 1.0, &spec).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_interval_and_reports_nonconvergence() {
        let spec = QuadratureSpec::default();
        assert!(matches!(
            integrate(|_| 0.0, 1.0, 0.0, &spec),
            Err(Error::InvalidInterval { .. })
        ));
        assert!(integrate(|_| 0.0, 0.0, f64::INFINITY, &spec).is_err());
        let tight = QuadratureSpec {
            abs_tol: 1e-14,
            rel_tol: 1e-14,
            max_subdivisions: 2,
        };
        let r = integrate(|x: f64| -0.9 * x.ln(), 0.0, 1.0, &tight);
        assert!(matches!(r, Err(Error::Convergence { .. })));
    }

    #[test]
    fn all_negative_infinity_is_zero_mass() {
        let v = integrate(|_| f64::NEG_INFINITY, 0.0, 1.0, &QuadratureSpec::default()).unwrap();
        assert_eq!(v, f64::NEG_INFINITY);
    }
}
