//! Gauss hypergeometric function through its Euler integral.
//!
//! For `0 < a < c` and `0 <= z < 1`
//!
//! ```text
//! 2F1(b, a; c; z) = ∫₀¹ t^{a-1} (1-t)^{c-a-1} (1-zt)^{-b} dt / B(a, c-a)
//! ```
//!
//! The integral is split at `t = 1/2`. The left half is integrated in
//! `v = ln t` and the right half in `v = ln(1-t)`, which flattens both the
//! algebraic endpoint singularities and the sharp peak that `(1-zt)^{-b}`
//! develops next to `t = 1` when `b` is large and `z` is close to one. The
//! vanishing tails next to each endpoint are added in closed form.

use crate::error::{domain, Result};
use crate::numkernel::quadrature::{integrate_breakpoints_scaled, QuadratureSpec};
use crate::numkernel::special::{log_add_exp, log_beta};

/// Unnormalized kernel `t^{a-1} (1-t)^{beta-1} (1 - z t)^{-b}` on `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerKernel {
    pub a: f64,
    pub beta: f64,
    pub b: f64,
    pub z: f64,
}

const TAIL_EPS: f64 = 1e-20;
const SCAN_POINTS: usize = 96;
const BASE_PANELS: usize = 6;

impl EulerKernel {
    pub fn new(a: f64, beta: f64, b: f64, z: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(domain(format!("kernel exponent a must be > 0, got {a}")));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(domain(format!("kernel exponent beta must be > 0, got {beta}")));
        }
        if !b.is_finite() {
            return Err(domain(format!("kernel exponent b must be finite, got {b}")));
        }
        if !(0.0..1.0).contains(&z) {
            return Err(domain(format!("kernel argument z must lie in [0, 1), got {z}")));
        }
        Ok(Self { a, beta, b, z })
    }

    /// Log of the kernel at `t ∈ (0, 1)`.
    pub fn log_value(&self, t: f64) -> f64 {
        let mut v = (self.a - 1.0) * t.ln() + (self.beta - 1.0) * (-t).ln_1p();
        if self.b != 0.0 {
            v -= self.b * (-self.z * t).ln_1p();
        }
        v
    }

    // integrand in v = ln t, Jacobian included
    fn left_log(&self, v: f64) -> f64 {
        let t = v.exp();
        let mut r = self.a * v + (self.beta - 1.0) * (-t).ln_1p();
        if self.b != 0.0 {
            r -= self.b * (-self.z * t).ln_1p();
        }
        r
    }

    fn left_magnitude(&self, v: f64) -> f64 {
        let t = v.exp();
        (self.a * v).abs() + ((self.beta - 1.0) * (-t).ln_1p()).abs() + (self.b * (-self.z * t).ln_1p()).abs()
    }

    // integrand in v = ln(1 - t), Jacobian included
    fn right_log(&self, v: f64) -> f64 {
        let u = v.exp();
        let mut r = self.beta * v + (self.a - 1.0) * (-u).ln_1p();
        if self.b != 0.0 {
            r -= self.b * self.log_one_minus_zt(u);
        }
        r
    }

    // ln(1 - z t) written in u = 1 - t
    fn log_one_minus_zt(&self, u: f64) -> f64 {
        let zt = self.z * (1.0 - u);
        if zt < 0.5 {
            (-zt).ln_1p()
        } else {
            ((1.0 - self.z) + self.z * u).ln()
        }
    }

    fn right_magnitude(&self, v: f64) -> f64 {
        let u = v.exp();
        (self.beta * v).abs()
            + ((self.a - 1.0) * (-u).ln_1p()).abs()
            + (self.b * self.log_one_minus_zt(u)).abs()
    }

    /// `ln ∫_lo^hi` of the kernel, for `0 <= lo < hi <= 1`.
    pub fn log_integral(&self, lo: f64, hi: f64, spec: &QuadratureSpec) -> Result<f64> {
        if !(0.0..1.0).contains(&lo) || !(hi > lo && hi <= 1.0) {
            return Err(crate::error::Error::InvalidInterval { lo, hi });
        }
        let mut total = f64::NEG_INFINITY;
        if lo < 0.5 {
            total = log_add_exp(total, self.left_piece(lo, hi.min(0.5), spec)?);
        }
        if hi > 0.5 {
            // u = 1 - t runs over [1 - hi, 1 - max(lo, 1/2)]
            total = log_add_exp(total, self.right_piece(1.0 - hi, 1.0 - lo.max(0.5), spec)?);
        }
        Ok(total)
    }

    /// `ln ∫_lo^hi` over `t ∈ [lo, hi] ⊂ [0, 1/2]`.
    fn left_piece(&self, lo: f64, hi: f64, spec: &QuadratureSpec) -> Result<f64> {
        if hi <= lo {
            return Ok(f64::NEG_INFINITY);
        }
        let growth = 1.0 + (self.beta - 1.0).abs() + self.b.abs() * self.z;
        let t_tail = TAIL_EPS / growth;
        let mut total = f64::NEG_INFINITY;
        if lo < t_tail {
            let top = hi.min(t_tail);
            total = log_power_integral(self.a, lo, top);
        }
        let start = lo.max(t_tail);
        if hi > start {
            let v = self.quad(|v| self.left_log(v), |v| self.left_magnitude(v), start.ln(), hi.ln(), spec)?;
            total = log_add_exp(total, v);
        }
        Ok(total)
    }

    /// Same as [`Self::left_piece`] for the mirrored half, in `u = 1 - t ∈ [lo, hi] ⊂ [0, 1/2]`.
    fn right_piece(&self, lo: f64, hi: f64, spec: &QuadratureSpec) -> Result<f64> {
        if hi <= lo {
            return Ok(f64::NEG_INFINITY);
        }
        let one_minus_z = 1.0 - self.z;
        let growth = 1.0 + (self.a - 1.0).abs() + self.b.abs() * self.z / one_minus_z;
        let u_tail = TAIL_EPS / growth;
        let mut total = f64::NEG_INFINITY;
        if lo < u_tail {
            let top = hi.min(u_tail);
            total = log_power_integral(self.beta, lo, top) - self.b * (-self.z).ln_1p();
        }
        let start = lo.max(u_tail);
        if hi > start {
            let v = self.quad(|v| self.right_log(v), |v| self.right_magnitude(v), start.ln(), hi.ln(), spec)?;
            total = log_add_exp(total, v);
        }
        Ok(total)
    }

    fn quad<F: Fn(f64) -> f64, M: Fn(f64) -> f64>(
        &self,
        f: F,
        magnitude: M,
        lo: f64,
        hi: f64,
        spec: &QuadratureSpec,
    ) -> Result<f64> {
        let width = hi - lo;
        let mut points = Vec::with_capacity(BASE_PANELS + 4);
        if width <= 1.0 {
            points.push(lo);
            points.push(hi);
        } else {
            // isolate the mode so narrow peaks are never straddled by coarse panels
            let step = width / SCAN_POINTS as f64;
            let (mut best, mut best_val) = (0usize, f64::NEG_INFINITY);
            for k in 0..=SCAN_POINTS {
                let val = f(lo + step * k as f64);
                if val > best_val {
                    best_val = val;
                    best = k;
                }
            }
            for k in 0..=BASE_PANELS {
                points.push(lo + width * k as f64 / BASE_PANELS as f64);
            }
            for k in [best.saturating_sub(1), best, (best + 1).min(SCAN_POINTS)] {
                points.push(lo + step * k as f64);
            }
            points.sort_by(f64::total_cmp);
            points.dedup();
        }
        integrate_breakpoints_scaled(&f, &magnitude, &points, spec)
    }
}

/// `ln ∫_lo^hi x^{a-1} dx` for `0 <= lo < hi`.
fn log_power_integral(a: f64, lo: f64, hi: f64) -> f64 {
    let top = a * hi.ln() - a.ln();
    if lo <= 0.0 {
        return top;
    }
    // hi^a - lo^a = hi^a (1 - (lo/hi)^a)
    top + (-(a * (lo.ln() - hi.ln())).exp_m1()).ln()
}

/// Quadrature settings used for every hypergeometric and kernel evaluation.
pub(crate) fn kernel_spec() -> QuadratureSpec {
    QuadratureSpec::relative(1e-13, 600)
}

/// `ln 2F1(b, a; c; z)` (the function is symmetric in `a` and `b`).
///
/// `a` is the parameter carried by the Euler integral and must satisfy
/// `0 < a < c`; `z` must lie in `[0, 1)`.
pub fn log_2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    if !(a.is_finite() && a > 0.0) {
        return Err(domain(format!("log_2f1 requires a > 0, got {a}")));
    }
    if !(c.is_finite() && c > a) {
        return Err(domain(format!("log_2f1 requires c > a, got a={a}, c={c}")));
    }
    if !b.is_finite() {
        return Err(domain(format!("log_2f1 requires finite b, got {b}")));
    }
    if !(0.0..1.0).contains(&z) {
        return Err(domain(format!("log_2f1 requires z in [0, 1), got {z}")));
    }
    if z == 0.0 || b == 0.0 {
        return Ok(0.0);
    }
    let kernel = EulerKernel::new(a, c - a, b, z)?;
    let log_int = kernel.log_integral(0.0, 1.0, &kernel_spec())?;
    Ok(log_int - log_beta(a, c - a)?)
}
