//! Closed-form ANOVA/REML estimates and confidence intervals for the
//! balanced design.

use serde::{Deserialize, Serialize};

use crate::balanced::{parameter_names, ParamSummary, SufficientStats};
use crate::error::{Error, Result};
use crate::numkernel::{quantile_chi2, quantile_f, quantile_t};

/// Interval construction for the random-effect variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum VarianceInterval {
    /// Modified large-sample interval for a difference of mean squares.
    #[default]
    Mls,
    /// Chi-square with Satterthwaite-matched degrees of freedom.
    Satterthwaite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreqFit {
    pub sigma2_hat: f64,
    pub sigma_u2_hat: f64,
    pub delta_hat: f64,
    pub beta_hat: Vec<f64>,
    /// Same parameter order as the posterior summaries; `mean` holds the estimate.
    pub intervals: Vec<ParamSummary>,
    pub df_within: usize,
    pub df_between: usize,
}

impl FreqFit {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.intervals.iter().find(|p| p.name == name)
    }
}

pub fn fit_freq(s: &SufficientStats, level: f64) -> Result<FreqFit> {
    fit_freq_with(s, level, VarianceInterval::Mls)
}

pub fn fit_freq_with(s: &SufficientStats, level: f64, method: VarianceInterval) -> Result<FreqFit> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("level must lie in (0, 1), got {level}")));
    }
    let df1 = s.n * (s.w - 1);
    if df1 < 1 {
        return Err(Error::DegreesOfFreedom("no within-group degrees of freedom".into()));
    }
    if s.n <= s.p {
        return Err(Error::DegreesOfFreedom(format!(
            "n - p = {} between-group degrees of freedom",
            s.n as i64 - s.p as i64
        )));
    }
    let df2 = s.n - s.p;
    let (d1, d2) = (df1 as f64, df2 as f64);
    let w = s.w as f64;
    let msw = s.q1 / d1;
    let msb = s.q2 / d2;
    if msw == 0.0 && msb == 0.0 {
        return Err(Error::Degenerate("both mean squares are zero".into()));
    }
    let alpha = 1.0 - level;
    let (pl, pu) = (0.5 * alpha, 1.0 - 0.5 * alpha);

    let sigma2_hat = msw;
    let sigma_u2_hat = ((msb - msw) / w).max(0.0);
    let delta_hat = w * sigma_u2_hat / (sigma2_hat + w * sigma_u2_hat);

    let sigma2_ci = (s.q1 / quantile_chi2(d1, pu)?, s.q1 / quantile_chi2(d1, pl)?);
    let sigma_u2_ci = match method {
        VarianceInterval::Mls => mls_interval(msb, msw, d2, d1, w, alpha)?,
        VarianceInterval::Satterthwaite => satterthwaite_interval(msb, msw, d2, d1, w, alpha)?,
    };
    // MSB / MSW ~ F(df2, df1) / (1 - δ)
    let delta_ci = if msw == 0.0 {
        (1.0, 1.0)
    } else {
        let f_obs = msb / msw;
        (
            (1.0 - quantile_f(d2, d1, pu)? / f_obs).max(0.0),
            (1.0 - quantile_f(d2, d1, pl)? / f_obs).max(0.0),
        )
    };

    let var_scale = msb.max(msw) / w;
    let cov = s.n_mn().inverse();
    let t = quantile_t(d2, pu)?;
    let names = parameter_names(s.p);
    let mut intervals = vec![
        ParamSummary {
            name: names[0].clone(),
            mean: delta_hat,
            lo: delta_ci.0,
            hi: delta_ci.1,
        },
        ParamSummary {
            name: names[1].clone(),
            mean: sigma2_hat,
            lo: sigma2_ci.0,
            hi: sigma2_ci.1,
        },
        ParamSummary {
            name: names[2].clone(),
            mean: sigma_u2_hat,
            lo: sigma_u2_ci.0,
            hi: sigma_u2_ci.1,
        },
    ];
    for j in 0..s.p {
        let se = (var_scale * cov.matrix()[(j, j)]).sqrt();
        let b = s.beta_ols[j];
        intervals.push(ParamSummary {
            name: names[3 + j].clone(),
            mean: b,
            lo: b - t * se,
            hi: b + t * se,
        });
    }
    Ok(FreqFit {
        sigma2_hat,
        sigma_u2_hat,
        delta_hat,
        beta_hat: s.beta_ols.iter().copied().collect(),
        intervals,
        df_within: df1,
        df_between: df2,
    })
}

// Graybill–Wang interval for (msb - msw) / w, with msb on n1 and msw on n2 df.
fn mls_interval(msb: f64, msw: f64, n1: f64, n2: f64, w: f64, alpha: f64) -> Result<(f64, f64)> {
    let (pl, pu) = (0.5 * alpha, 1.0 - 0.5 * alpha);
    let g1 = 1.0 - n1 / quantile_chi2(n1, pu)?;
    let g2 = 1.0 - n2 / quantile_chi2(n2, pu)?;
    let h1 = n1 / quantile_chi2(n1, pl)? - 1.0;
    let h2 = n2 / quantile_chi2(n2, pl)? - 1.0;
    let f_hi = quantile_f(n1, n2, pu)?;
    let f_lo = quantile_f(n1, n2, pl)?;
    let g12 = ((f_hi - 1.0).powi(2) - (g1 * f_hi).powi(2) - h2 * h2) / f_hi;
    let h12 = ((1.0 - f_lo).powi(2) - (h1 * f_lo).powi(2) - g2 * g2) / f_lo;
    let vl = g1 * g1 * msb * msb + h2 * h2 * msw * msw + g12 * msb * msw;
    let vu = h1 * h1 * msb * msb + g2 * g2 * msw * msw + h12 * msb * msw;
    let diff = msb - msw;
    Ok((
        ((diff - vl.max(0.0).sqrt()) / w).max(0.0),
        ((diff + vu.max(0.0).sqrt()) / w).max(0.0),
    ))
}

fn satterthwaite_interval(msb: f64, msw: f64, n1: f64, n2: f64, w: f64, alpha: f64) -> Result<(f64, f64)> {
    let est = (msb - msw) / w;
    if est <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let df = (msb - msw).powi(2) / (msb * msb / n1 + msw * msw / n2);
    Ok((
        df * est / quantile_chi2(df, 1.0 - 0.5 * alpha)?,
        df * est / quantile_chi2(df, 0.5 * alpha)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balanced::{suff_stats, BalancedDataset};
    use nalgebra::DMatrix;

    #[test]
    fn trivial_dataset() {
        let d = BalancedDataset::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]),
            DMatrix::from_element(2, 1, 1.0),
        )
        .unwrap();
        let f = fit_freq(&suff_stats(&d).unwrap(), 0.95).unwrap();
        assert_eq!(f.sigma2_hat, 0.0);
        assert!((f.sigma_u2_hat - 0.5).abs() < 1e-14);
        assert!((f.beta_hat[0] - 1.5).abs() < 1e-14);
        assert_eq!((f.df_within, f.df_between), (2, 1));
    }

    #[test]
    fn truncates_at_zero_and_orders_intervals() {
        let y = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 1.0, 1.1, -0.9, 2.9, 3.0, -1.0, 1.0]);
        let d = BalancedDataset::new(y, DMatrix::from_element(3, 1, 1.0)).unwrap();
        let s = suff_stats(&d).unwrap();
        let f = fit_freq(&s, 0.95).unwrap();
        assert!(s.q2 / 2.0 <= f.sigma2_hat);
        assert_eq!(f.sigma_u2_hat, 0.0);
        for m in [VarianceInterval::Mls, VarianceInterval::Satterthwaite] {
            for iv in fit_freq_with(&s, 0.9, m).unwrap().intervals {
                assert!(iv.lo <= iv.hi, "{iv:?}");
            }
        }
    }

    #[test]
    fn rejects_missing_degrees_of_freedom() {
        let y = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 5.0]);
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let s = suff_stats(&BalancedDataset::new(y, x).unwrap()).unwrap();
        assert!(matches!(fit_freq(&s, 0.95), Err(Error::DegreesOfFreedom(_))));
    }
}
