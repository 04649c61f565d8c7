//! Interval estimators selectable by name.

use crate::balanced::{posterior, posterior_summaries, ParamSummary, SufficientStats};
use crate::error::{Error, Result};
use crate::evidence::{empirical_bayes, EbConfig};
use crate::freq::{fit_freq_with, VarianceInterval};
use crate::numkernel::RngStream;

/// Everything an estimator may need beyond the data.
#[derive(Debug, Clone, PartialEq)]
pub struct FitContext {
    pub level: f64,
    pub samples: usize,
    pub seed: RngStream,
    pub eb: EbConfig,
}

/// Produces one summary per parameter, in [`crate::balanced::parameter_names`] order.
pub trait Estimator: Send + Sync {
    fn name(&self) -> &str;
    fn estimate(&self, s: &SufficientStats, ctx: &FitContext) -> Result<Vec<ParamSummary>>;
}

/// Empirical-Bayes hyperparameters, closed-form posterior, Monte Carlo intervals.
#[derive(Debug, Clone, Copy, Default)]
pub struct BayesEstimator;

impl Estimator for BayesEstimator {
    fn name(&self) -> &str {
        "bayes"
    }

    fn estimate(&self, s: &SufficientStats, ctx: &FitContext) -> Result<Vec<ParamSummary>> {
        let fit = empirical_bayes(s, &ctx.eb)?;
        let post = posterior(s, &fit.hyper)?;
        Ok(posterior_summaries(&post, ctx.samples, ctx.seed, ctx.level)?.params)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FreqEstimator {
    pub method: VarianceInterval,
}

impl Estimator for FreqEstimator {
    fn name(&self) -> &str {
        match self.method {
            VarianceInterval::Mls => "freq",
            VarianceInterval::Satterthwaite => "freq-satterthwaite",
        }
    }

    fn estimate(&self, s: &SufficientStats, ctx: &FitContext) -> Result<Vec<ParamSummary>> {
        Ok(fit_freq_with(s, ctx.level, self.method)?.intervals)
    }
}

pub struct EstimatorRegistry {
    entries: Vec<Box<dyn Estimator>>,
}

impl Default for EstimatorRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl EstimatorRegistry {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    /// `bayes`, `freq` and `freq-satterthwaite`.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(BayesEstimator));
        r.register(Box::new(FreqEstimator {
            method: VarianceInterval::Mls,
        }));
        r.register(Box::new(FreqEstimator {
            method: VarianceInterval::Satterthwaite,
        }));
        r
    }

    /// Adds an estimator, replacing any existing one with the same name.
    pub fn register(&mut self, e: Box<dyn Estimator>) {
        self.entries.retain(|x| x.name() != e.name());
        self.entries.push(e);
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn Estimator> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .map(|e| e.as_ref())
            .ok_or_else(|| Error::UnknownEstimator(name.to_string()))
    }

    pub fn select(&self, names: &[String]) -> Result<Vec<&dyn Estimator>> {
        if names.is_empty() {
            return Err(Error::Config("no estimators selected".into()));
        }
        names.iter().map(|n| self.get(n)).collect()
    }
}
