use std::io::Write;
use std::path::Path;

use bgnmix::balanced::{posterior, posterior_summaries, suff_stats, PosteriorBGN, PriorHyper, SufficientStats};
use bgnmix::evidence::{empirical_bayes, log_evidence, EbConfig};
use bgnmix::methods::EstimatorRegistry;
use bgnmix::numkernel::RngStream;
use bgnmix::selfcheck::{run_selfcheck, Fault};
use bgnmix::simstudy::{run_study, SimConfig};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Beta0Spec, FaultArg, FileConfig, FitArgs, Format, SelfcheckArgs, SimArgs};
use crate::error::CliError;
use crate::io::ingest_csv;

const DEFAULT_SEED: u64 = 1;
const DEFAULT_LEVEL: f64 = 0.95;
const DEFAULT_SAMPLES: usize = 100_000;

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            Ok(stdout.flush()?)
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(v).map_err(|e| CliError::Io(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Provenance {
    User,
    EmpiricalBayes,
    Default,
}

#[derive(Debug, Clone, Serialize)]
struct Resolved<T> {
    value: T,
    provenance: Provenance,
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> Resolved<T> {
    match flag.or(file) {
        Some(value) => Resolved {
            value,
            provenance: Provenance::User,
        },
        None => Resolved {
            value: default,
            provenance: Provenance::Default,
        },
    }
}

struct FitSetup {
    stats: SufficientStats,
    hyper: PriorHyper,
    hyper_json: Value,
    config_json: Value,
    seed: u64,
    level: f64,
    samples: usize,
    log_evidence: f64,
    warnings: Vec<String>,
}

fn setup_fit(args: &FitArgs) -> Result<FitSetup, CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let h = &args.hyper;
    let data = ingest_csv(&args.data)?;
    let s = suff_stats(&data)?;
    let mut warnings = Vec::new();

    let mu1 = pick(h.mu1, file.mu1, 0.5);
    let mu2 = pick(h.mu2, file.mu2, 1.0);
    let beta0_spec = pick(h.beta0.clone(), file.beta0.clone(), Beta0Spec::Values(vec![0.0; s.p]));
    let beta0 = match &beta0_spec.value {
        Beta0Spec::Keyword(k) if k == "ols" => s.beta_ols.clone(),
        Beta0Spec::Keyword(k) => return Err(CliError::Config(format!("unknown beta0 keyword `{k}`"))),
        Beta0Spec::Values(v) if v.len() == s.p => DVector::from_column_slice(v),
        Beta0Spec::Values(v) => {
            return Err(CliError::Config(format!("beta0 has {} entries, data has p = {}", v.len(), s.p)))
        }
    };
    let fixed = [h.nu1.or(file.nu1), h.nu2.or(file.nu2), h.nu3.or(file.nu3)];
    let eb_flag = h.eb || file.eb.unwrap_or(false);
    let nu1_bounds = h.nu1_bounds.or(file.nu1_bounds);
    if nu1_bounds.is_some() && fixed[0].is_some() {
        warnings.push("nu1 is fixed, so --nu1-bounds has no effect".into());
    }

    let (hyper, log_ev, nu_prov) = if fixed.iter().all(Option::is_some) {
        let [nu1, nu2, nu3] = fixed.map(Option::unwrap);
        let hyper = PriorHyper::zellner(mu1.value, nu1, mu2.value, nu2, beta0.clone(), nu3);
        let log_ev = log_evidence(&s, &hyper)?;
        (hyper, log_ev, [Provenance::User; 3])
    } else {
        let mut cfg = EbConfig::new(s.p);
        cfg.mu1 = mu1.value;
        cfg.mu2 = mu2.value;
        cfg.beta0 = beta0.clone();
        if let Some(b) = nu1_bounds {
            cfg.nu1_bounds = b;
        }
        let mut prov = [Provenance::EmpiricalBayes; 3];
        for (i, v) in fixed.iter().enumerate() {
            if let Some(v) = *v {
                prov[i] = Provenance::User;
                match i {
                    0 => cfg.nu1_bounds = (v, v),
                    1 => cfg.nu2_bounds = (v, v),
                    _ => cfg.nu3_bounds = (v, v),
                }
            }
        }
        let fit = empirical_bayes(&s, &cfg)?;
        if !fit.converged {
            warnings.push(format!(
                "empirical Bayes search did not converge within {} evaluations; best point used",
                fit.evaluations
            ));
        }
        (fit.hyper, fit.log_evidence, prov)
    };

    let seed = args.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let level = args.level.or(file.level).unwrap_or(DEFAULT_LEVEL);
    let samples = args.samples.or(file.samples).unwrap_or(DEFAULT_SAMPLES);
    let hyper_json = json!({
        "mu1": mu1,
        "mu2": mu2,
        "beta0": { "value": hyper.beta0.as_slice(), "provenance": beta0_spec.provenance },
        "nu1": { "value": hyper.nu1, "provenance": nu_prov[0] },
        "nu2": { "value": hyper.nu2, "provenance": nu_prov[1] },
        "nu3": { "value": zellner_nu3(&hyper), "provenance": nu_prov[2] },
    });
    let config_json = json!({
        "data": args.data,
        "seed": seed,
        "level": level,
        "samples": samples,
        "eb": eb_flag || fixed.iter().any(Option::is_none),
        "nu1_bounds": nu1_bounds,
        "beta0": beta0_spec.value,
        "config_file": args.config,
    });
    Ok(FitSetup {
        stats: s,
        hyper,
        hyper_json,
        config_json,
        seed,
        level,
        samples,
        log_evidence: log_ev,
        warnings,
    })
}

fn zellner_nu3(h: &PriorHyper) -> Option<f64> {
    match h.precision {
        bgnmix::balanced::PriorPrecision::Zellner(v) => Some(v),
        bgnmix::balanced::PriorPrecision::Explicit(_) => None,
    }
}

fn suffstats_json(s: &SufficientStats) -> Value {
    json!({
        "n": s.n,
        "w": s.w,
        "p": s.p,
        "q1": s.q1,
        "q2": s.q2,
        "beta_ols": s.beta_ols.as_slice(),
        "ybar": s.ybar.as_slice(),
    })
}

fn posterior_json(post: &PosteriorBGN) -> Value {
    let b = &post.bgn;
    let scale: Vec<Vec<f64>> = b
        .sigma_scale
        .matrix()
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    json!({
        "phi1": b.phi1,
        "phi2": b.phi2,
        "phi3": b.phi3,
        "kappa1": b.kappa1,
        "kappa2": b.kappa2,
        "lambda": b.kappa2 / b.kappa1,
        "q3": post.q3,
        "beta_tilde": b.mu.as_slice(),
        "scale_matrix": scale,
    })
}

pub fn cmd_fit(args: &FitArgs) -> Result<i32, CliError> {
    let setup = setup_fit(args)?;
    let post = posterior(&setup.stats, &setup.hyper)?;
    let summaries = posterior_summaries(&post, setup.samples, RngStream::new(setup.seed, 0), setup.level)?;
    let bytes = match args.format {
        Format::Json => to_json(&json!({
            "config": setup.config_json,
            "suffstats": suffstats_json(&setup.stats),
            "hyper": setup.hyper_json,
            "posterior": posterior_json(&post),
            "summaries": summaries,
            "log_evidence": setup.log_evidence,
            "warnings": setup.warnings,
        }))?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for p in &summaries.params {
                w.serialize(p)?;
            }
            w.into_inner().map_err(|e| CliError::Io(e.to_string()))?
        }
    };
    for msg in &setup.warnings {
        log::warn!("{msg}");
    }
    emit(args.out.as_deref(), &bytes)?;
    Ok(0)
}

pub fn cmd_evidence(args: &FitArgs) -> Result<i32, CliError> {
    if args.format == Format::Csv {
        return Err(CliError::Config("evidence reports are JSON only".into()));
    }
    let setup = setup_fit(args)?;
    let post = posterior(&setup.stats, &setup.hyper)?;
    for msg in &setup.warnings {
        log::warn!("{msg}");
    }
    emit(
        args.out.as_deref(),
        &to_json(&json!({
            "config": setup.config_json,
            "suffstats": suffstats_json(&setup.stats),
            "hyper": setup.hyper_json,
            "posterior": posterior_json(&post),
            "summaries": Value::Null,
            "log_evidence": setup.log_evidence,
            "warnings": setup.warnings,
        }))?,
    )?;
    Ok(0)
}

pub fn sim_config(args: &SimArgs) -> Result<(SimConfig, usize), CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let mut cfg = SimConfig::default();
    macro_rules! set {
        ($($field:ident),*) => {
            $( if let Some(v) = args.$field.clone().or(file.$field.clone()) { cfg.$field = v; } )*
        };
    }
    set!(reps, seed, level, samples, nu1_bounds, mu1, mu2, n, w, sigma2, sigma_u2, beta, methods);
    cfg.p = cfg.beta.len();
    let workers = args.workers.or(file.workers).unwrap_or(0);
    cfg.validate()?;
    Ok((cfg, workers))
}

pub fn cmd_simulate(args: &SimArgs) -> Result<i32, CliError> {
    let (cfg, workers) = sim_config(args)?;
    let registry = EstimatorRegistry::builtin();
    registry.select(&cfg.methods)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let report = pool.install(|| run_study(&cfg, &registry))?;
    if report.failures > 0 {
        log::warn!("{} of {} replicates failed and were excluded", report.failures, cfg.reps);
    }
    let bytes = match args.format {
        Format::Json => to_json(&report)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in &report.rows {
                w.serialize(row)?;
            }
            w.into_inner().map_err(|e| CliError::Io(e.to_string()))?
        }
    };
    emit(args.out.as_deref(), &bytes)?;
    Ok(0)
}

pub fn cmd_selfcheck(args: &SelfcheckArgs) -> Result<i32, CliError> {
    if args.trials == 0 {
        return Err(CliError::Config("trials must be >= 1".into()));
    }
    let fault = match args.inject_fault {
        Some(FaultArg::Kappa2) => Fault::FlipKappa2,
        None => Fault::None,
    };
    let report = run_selfcheck(args.seed, args.trials, fault)?;
    for c in &report.checks {
        eprintln!(
            "{:<24} max gap {:>10.3e}  tolerance {:.0e}  {}",
            c.name,
            c.max_gap,
            c.tolerance,
            if c.passed { "ok" } else { "FAILED" }
        );
    }
    emit(args.out.as_deref(), &to_json(&report)?)?;
    if report.passed() {
        Ok(0)
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        Err(CliError::SelfCheck(failed.join(", ")))
    }
}
