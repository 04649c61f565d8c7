//! Distribution functions and their inverses for the frequentist comparator
//! and the tests.
//!
//! CDFs come from the regularized incomplete gamma/beta functions; the
//! quantiles invert them with a bracketed Brent iteration, working on the
//! upper tail directly when `p > 1/2` to keep full relative precision there.

use libm::erfc;
use statrs::function::{beta::beta_reg, erf::erfc_inv, gamma::gamma_lr, gamma::gamma_ur};

use crate::error::{domain, Error, Result};
use crate::numkernel::special::{log_beta, log_gamma};

fn check_prob(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("probability must lie in (0, 1), got {p}")));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(domain(format!("{name} must be finite and > 0, got {v}")));
    }
    Ok(())
}

/// Brent's method on a sign-changing bracket `[lo, hi]`.
pub(crate) fn brent<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> Result<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::RootFinding(format!(
            "no sign change on [{a}, {b}] ({fa}, {fb})"
        )));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..300 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Err(Error::RootFinding("Brent iteration limit reached".into()))
}

/// Expands `hi` geometrically until `f(hi) >= 0`, for increasing `f` with `f(lo) < 0`.
fn expand_upper<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, mut hi: f64) -> Result<f64> {
    for _ in 0..2000 {
        if f(hi) >= 0.0 {
            return Ok(hi);
        }
        hi = lo + 2.0 * (hi - lo);
    }
    Err(Error::RootFinding("could not bracket quantile".into()))
}

pub fn cdf_normal(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn quantile_normal(p: f64) -> Result<f64> {
    check_prob(p)?;
    let mut x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    // one Newton polish on the tail that carries the precision
    let dens = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if dens > 0.0 {
        let resid = if p < 0.5 { cdf_normal(x) - p } else { (1.0 - p) - cdf_normal(-x) };
        x -= resid / dens;
    }
    Ok(x)
}

/// Gamma log-density, shape/rate convention.
pub fn log_pdf_gamma(shape: f64, rate: f64, x: f64) -> Result<f64> {
    check_positive("shape", shape)?;
    check_positive("rate", rate)?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(domain(format!("gamma density needs x > 0, got {x}")));
    }
    Ok(shape * rate.ln() - log_gamma(shape)? + (shape - 1.0) * x.ln() - rate * x)
}

pub fn log_pdf_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(domain(format!("beta density needs x in (0, 1), got {x}")));
    }
    Ok((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - log_beta(a, b)?)
}

/// Gamma CDF, shape/rate convention.
pub fn cdf_gamma(shape: f64, rate: f64, x: f64) -> Result<f64> {
    check_positive("shape", shape)?;
    check_positive("rate", rate)?;
    if x <= 0.0 {
        return Ok(0.0);
    }
    Ok(gamma_lr(shape, x * rate))
}

pub fn quantile_gamma(shape: f64, rate: f64, p: f64) -> Result<f64> {
    check_prob(p)?;
    check_positive("shape", shape)?;
    check_positive("rate", rate)?;
    // solved in u = ln x: small shapes put lower quantiles far below any linear bracket
    let f = |u: f64| {
        let x = u.exp();
        if p < 0.5 {
            gamma_lr(shape, x) - p
        } else {
            (1.0 - p) - gamma_ur(shape, x)
        }
    };
    let mid = shape.ln();
    let (mut lo, mut hi) = (mid - 1.0, mid + 1.0);
    let mut step = 1.0;
    while f(lo) > 0.0 {
        step *= 2.0;
        lo = mid - step;
        if lo.exp() == 0.0 {
            return Ok(0.0);
        }
    }
    step = 1.0;
    while f(hi) < 0.0 {
        step *= 2.0;
        hi = mid + step;
        if !hi.exp().is_finite() {
            return Err(Error::RootFinding("could not bracket gamma quantile".into()));
        }
    }
    let u = brent(f, lo, hi, 1e-15)?;
    Ok(u.exp() / rate)
}

pub fn quantile_chi2(df: f64, p: f64) -> Result<f64> {
    check_positive("df", df)?;
    Ok(quantile_gamma(0.5 * df, 0.5, p)?)
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn cdf_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    check_positive("a", a)?;
    check_positive("b", b)?;
    Ok(if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        beta_reg(a, b, x)
    })
}

pub fn quantile_beta(a: f64, b: f64, p: f64) -> Result<f64> {
    check_prob(p)?;
    check_positive("a", a)?;
    check_positive("b", b)?;
    if p > 0.5 {
        // I_x(a,b) = 1 - I_{1-x}(b,a)
        return Ok(1.0 - quantile_beta(b, a, 1.0 - p)?);
    }
    brent(|x| beta_reg(a, b, x) - p, 0.0, 1.0, 1e-300)
}

pub fn cdf_t(df: f64, t: f64) -> Result<f64> {
    check_positive("df", df)?;
    let tail = 0.5 * beta_reg(0.5 * df, 0.5, df / (df + t * t));
    Ok(if t > 0.0 { 1.0 - tail } else { tail })
}

pub fn quantile_t(df: f64, p: f64) -> Result<f64> {
    check_prob(p)?;
    check_positive("df", df)?;
    if p == 0.5 {
        return Ok(0.0);
    }
    if p < 0.5 {
        return Ok(-quantile_t(df, 1.0 - p)?);
    }
    // solve the upper-tail equation on t > 0
    let tail = 1.0 - p;
    let mut f = |t: f64| tail - 0.5 * beta_reg(0.5 * df, 0.5, df / (df + t * t));
    let hi = expand_upper(&mut f, 0.0, 2.0)?;
    brent(f, 0.0, hi, 1e-15)
}

/// Quantile of Snedecor's F with `d1` numerator and `d2` denominator degrees
/// of freedom; `d2 = inf` gives `χ²_{d1} / d1`.
pub fn quantile_f(d1: f64, d2: f64, p: f64) -> Result<f64> {
    check_prob(p)?;
    check_positive("d1", d1)?;
    if d2 == f64::INFINITY {
        return Ok(quantile_chi2(d1, p)? / d1);
    }
    check_positive("d2", d2)?;
    let x = quantile_beta(0.5 * d1, 0.5 * d2, p)?;
    Ok(d2 * x / (d1 * (1.0 - x)))
}
