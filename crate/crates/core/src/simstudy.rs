//! Repeated-sampling study comparing interval estimators on simulated
//! balanced data.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balanced::{delta_from_components, parameter_names, suff_stats, BalancedDataset, ParamSummary};
use crate::error::{Error, Result};
use crate::evidence::EbConfig;
use crate::methods::{EstimatorRegistry, FitContext};
use crate::numkernel::{sample_std_normal, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub reps: usize,
    pub n: usize,
    pub w: usize,
    pub p: usize,
    pub sigma2: f64,
    pub sigma_u2: f64,
    pub beta: Vec<f64>,
    pub seed: u64,
    pub level: f64,
    pub nu1_bounds: (f64, f64),
    pub mu1: f64,
    pub mu2: f64,
    /// Posterior draws per replicate.
    pub samples: usize,
    pub methods: Vec<String>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            reps: 1000,
            n: 20,
            w: 4,
            p: 3,
            sigma2: 4.0,
            sigma_u2: 0.5,
            beta: vec![0.2, 2.0, -0.5],
            seed: 1,
            level: 0.95,
            nu1_bounds: (2.0, 2.001),
            mu1: 0.5,
            mu2: 1.0,
            samples: 100_000,
            methods: vec!["bayes".into(), "freq".into()],
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.reps == 0 {
            return bad("reps must be >= 1".into());
        }
        if self.p == 0 || self.n <= self.p {
            return bad(format!("need n > p >= 1, got n = {}, p = {}", self.n, self.p));
        }
        if self.w < 2 {
            return bad(format!("need w >= 2, got {}", self.w));
        }
        if !(self.sigma2 > 0.0) || !(self.sigma_u2 >= 0.0) {
            return bad("variances must be sigma2 > 0 and sigma_u2 >= 0".into());
        }
        if self.beta.len() != self.p {
            return bad(format!("beta has length {}, p = {}", self.beta.len(), self.p));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("level must lie in (0, 1), got {}", self.level));
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        self.eb().validate()
    }

    pub fn eb(&self) -> EbConfig {
        let mut eb = EbConfig::new(self.p);
        eb.nu1_bounds = self.nu1_bounds;
        eb.mu1 = self.mu1;
        eb.mu2 = self.mu2;
        eb
    }

    /// True values in [`parameter_names`] order.
    pub fn truth(&self) -> Vec<f64> {
        let mut t = vec![
            delta_from_components(self.sigma2, self.sigma_u2, self.w),
            self.sigma2,
            self.sigma_u2,
        ];
        t.extend(&self.beta);
        t
    }

    fn replicate_stream(&self, rep: usize) -> RngStream {
        RngStream::new(self.seed, rep as u64)
    }
}

/// Intercept plus standard-normal covariates, group effects and noise, all
/// drawn from the replicate's own stream.
pub fn gen_replicate(cfg: &SimConfig, rep: usize) -> Result<BalancedDataset> {
    let mut rng = cfg.replicate_stream(rep).generator();
    let (n, w, p) = (cfg.n, cfg.w, cfg.p);
    let mut x = DMatrix::from_element(n, p, 1.0);
    for i in 0..n {
        for j in 1..p {
            x[(i, j)] = sample_std_normal(&mut rng);
        }
    }
    let mean = &x * DVector::from_column_slice(&cfg.beta);
    let (sd_u, sd_e) = (cfg.sigma_u2.sqrt(), cfg.sigma2.sqrt());
    let mut y = DMatrix::zeros(n, w);
    for i in 0..n {
        let u = sd_u * sample_std_normal(&mut rng);
        for t in 0..w {
            y[(i, t)] = mean[i] + u + sd_e * sample_std_normal(&mut rng);
        }
    }
    BalancedDataset::new(y, x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub parameter: String,
    pub method: String,
    #[serde(rename = "true")]
    pub truth: f64,
    pub overlap: f64,
    pub width: f64,
    pub mse: f64,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: SimConfig,
    /// Replicates that entered the metrics.
    pub replicates: usize,
    pub failures: usize,
    pub rows: Vec<MetricRow>,
}

impl SimulationReport {
    pub fn row(&self, parameter: &str, method: &str) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.parameter == parameter && r.method == method)
    }
}

// Sorting first makes the result independent of replicate order.
fn sorted_mean(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per-method summaries for one replicate.
pub type ReplicateResult = Vec<Vec<ParamSummary>>;

pub fn run_replicate(cfg: &SimConfig, registry: &EstimatorRegistry, rep: usize) -> Result<ReplicateResult> {
    let data = gen_replicate(cfg, rep)?;
    let s = suff_stats(&data)?;
    let ctx = FitContext {
        level: cfg.level,
        samples: cfg.samples,
        seed: cfg.replicate_stream(rep).substream(u64::MAX),
        eb: cfg.eb(),
    };
    registry
        .select(&cfg.methods)?
        .into_iter()
        .map(|e| e.estimate(&s, &ctx))
        .collect()
}

/// Runs every replicate on the current rayon pool.
///
/// A replicate where any method fails is logged and left out of all
/// methods' metrics, so every method is scored on the same datasets.
pub fn run_study(cfg: &SimConfig, registry: &EstimatorRegistry) -> Result<SimulationReport> {
    cfg.validate()?;
    registry.select(&cfg.methods)?;
    let results: Vec<Result<ReplicateResult>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| run_replicate(cfg, registry, rep))
        .collect();
    let mut ok = Vec::with_capacity(results.len());
    let mut failures = 0;
    for (rep, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                log::warn!("replicate {rep} failed: {e}");
                failures += 1;
            }
        }
    }
    Ok(SimulationReport {
        config: cfg.clone(),
        replicates: ok.len(),
        failures,
        rows: metrics(cfg, &ok),
    })
}

/// Coverage, mean width, MSE and bias per parameter and method.
pub fn metrics(cfg: &SimConfig, results: &[ReplicateResult]) -> Vec<MetricRow> {
    let truth = cfg.truth();
    let mut rows = Vec::new();
    for (j, name) in parameter_names(cfg.p).into_iter().enumerate() {
        for (m, method) in cfg.methods.iter().enumerate() {
            let t = truth[j];
            let col: Vec<&ParamSummary> = results.iter().map(|r| &r[m][j]).collect();
            let (overlap, width, mse, bias) = if col.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
            } else {
                (
                    sorted_mean(col.iter().map(|s| f64::from(u8::from(s.lo <= t && t <= s.hi))).collect()),
                    sorted_mean(col.iter().map(|s| s.hi - s.lo).collect()),
                    sorted_mean(col.iter().map(|s| (s.mean - t).powi(2)).collect()),
                    sorted_mean(col.iter().map(|s| s.mean - t).collect()),
                )
            };
            rows.push(MetricRow {
                parameter: name.clone(),
                method: method.clone(),
                truth: t,
                overlap,
                width,
                mse,
                bias,
            });
        }
    }
    rows
}
