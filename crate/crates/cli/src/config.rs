//! Command-line flags, the optional JSON config file, and their merge.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "bgnmix", version, about = "Closed-form Bayesian fits of balanced linear mixed models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model to a long-format CSV file and report posterior summaries.
    Fit(FitArgs),
    /// Report the log-evidence, tuning unspecified hyperparameters by empirical Bayes.
    Evidence(FitArgs),
    /// Run the simulation study comparing interval estimators.
    Simulate(SimArgs),
    /// Check every closed-form identity against independent evaluations.
    Selfcheck(SelfcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Beta0Spec {
    /// Only `"ols"` is accepted.
    Keyword(String),
    Values(Vec<f64>),
}

impl std::str::FromStr for Beta0Spec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.trim() == "ols" {
            return Ok(Beta0Spec::Keyword("ols".into()));
        }
        parse_list(s).map(Beta0Spec::Values)
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("cannot parse `{t}` as a number")))
        .collect()
}

fn parse_bounds(s: &str) -> Result<(f64, f64), String> {
    match parse_list(s)?.as_slice() {
        [lo, hi] => Ok((*lo, *hi)),
        _ => Err("expected `lo,hi`".into()),
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct HyperArgs {
    #[arg(long)]
    pub mu1: Option<f64>,
    #[arg(long)]
    pub mu2: Option<f64>,
    /// `ols` or a comma-separated vector.
    #[arg(long)]
    pub beta0: Option<Beta0Spec>,
    #[arg(long)]
    pub nu1: Option<f64>,
    #[arg(long)]
    pub nu2: Option<f64>,
    #[arg(long)]
    pub nu3: Option<f64>,
    /// Search box for ν1 during empirical Bayes, as `lo,hi`.
    #[arg(long, value_parser = parse_bounds)]
    pub nu1_bounds: Option<(f64, f64)>,
    /// Tune every ν not fixed by a flag or the config file (also the default).
    #[arg(long)]
    pub eb: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// JSON file with default values for any of the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, value_parser = parse_bounds)]
    pub nu1_bounds: Option<(f64, f64)>,
    #[arg(long)]
    pub mu1: Option<f64>,
    #[arg(long)]
    pub mu2: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub w: Option<usize>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub sigma_u2: Option<f64>,
    /// Comma-separated fixed effects; sets p.
    #[arg(long, value_parser = parse_list)]
    pub beta: Option<Vec<f64>>,
    /// Comma-separated estimator names.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Worker threads; 0 uses every available core.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    Kappa2,
}

#[derive(Debug, Clone, Args)]
pub struct SelfcheckArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Random instances per identity.
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, hide = true)]
    pub inject_fault: Option<FaultArg>,
}

/// Values a config file may supply; flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    pub beta0: Option<Beta0Spec>,
    pub nu1: Option<f64>,
    pub nu2: Option<f64>,
    pub nu3: Option<f64>,
    pub nu1_bounds: Option<(f64, f64)>,
    pub eb: Option<bool>,
    pub seed: Option<u64>,
    pub level: Option<f64>,
    pub samples: Option<usize>,
    pub reps: Option<usize>,
    pub n: Option<usize>,
    pub w: Option<usize>,
    pub sigma2: Option<f64>,
    pub sigma_u2: Option<f64>,
    pub beta: Option<Vec<f64>>,
    pub methods: Option<Vec<String>>,
    pub workers: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
