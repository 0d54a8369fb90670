//! Stage orchestration. Every stage derives its randomness from the root
//! seed, so stages rerun independently and reproduce each other's samples.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use bnncert_core::rng::derive_seed;
use bnncert_core::{
    certify_perf_bounds, collect_outputs, cvar_alpha, cvar_certified_interval, fit_support, gamma_robustness,
    make_template, perf_samples, plan_cvar_samples, scenario_sample_size, BnnModel, Certificate, CertificateKind,
    FittedSupport, OutputSamples, RiskSpec, SampleMetadata,
};
use serde::{Deserialize, Serialize};

use crate::config::{RadiusSpace, Rho, RunConfig, SampleCount};
use crate::error::{CliError, CliResult};

/// Samples drawn before the spread of the outputs is known.
const PILOT_SAMPLES: usize = 256;
const MAX_PLAN_ROUNDS: usize = 8;

pub const REPORT_FILE: &str = "report.json";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const SAMPLES_META_FILE: &str = "samples.meta.json";
pub const SUPPORT_FILE: &str = "support.json";
pub const VALIDATION_FILE: &str = "validation.json";

/// Parameters of the Wasserstein radius behind the CVaR intervals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusSetup {
    pub dim: usize,
    pub lipschitz: f64,
    pub rho: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub alpha: f64,
    pub beta: f64,
    pub h: f64,
    pub n: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub scenario_n: u64,
    pub radius: RadiusSetup,
    pub cvar: Vec<PlanEntry>,
    /// Sample size used by the run.
    pub n_samples: usize,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaValue {
    pub alpha: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub support_certified: bool,
    pub holdout_violation_rate: Option<f64>,
    pub empirical_mean: f64,
    pub empirical_cvar: Vec<AlphaValue>,
    /// Upper minus lower end of every CVaR interval planned for the target
    /// half-width.
    pub gamma_robustness: f64,
    /// Width between the certified performance bounds, if computed.
    pub perf_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: RunConfig,
    pub plan: Plan,
    pub samples: SampleMetadata,
    pub support: FittedSupport,
    pub certificates: Vec<Certificate>,
    pub diagnostics: Diagnostics,
    /// Wall-clock seconds per stage; the only non-reproducible field.
    pub timing: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub trials: usize,
    pub holdout: usize,
    pub n_samples: usize,
    pub eps1: f64,
    pub beta1: f64,
    pub violation_rates: Vec<f64>,
    /// Fraction of trials whose violation rate exceeds `eps1`.
    pub failure_fraction: f64,
    /// `beta1 + 3 sqrt(beta1 (1 - beta1) / trials)`.
    pub threshold: f64,
    pub within_threshold: bool,
}

fn bbox_diagonal(samples: &OutputSamples) -> f64 {
    let n = samples.dim();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for y in samples.rows() {
        for i in 0..n {
            lo[i] = lo[i].min(y[i]);
            hi[i] = hi[i].max(y[i]);
        }
    }
    lo.iter().zip(&hi).map(|(l, h)| (h - l).powi(2)).sum::<f64>().sqrt()
}

/// Radius parameters; `samples` supplies the spread when `rho = "auto"`.
pub fn radius_setup(cfg: &RunConfig, output_dim: usize, samples: Option<&OutputSamples>) -> CliResult<RadiusSetup> {
    let l0 = cfg.lipschitz();
    let spread = match (cfg.risk.rho, samples) {
        (Rho::Fixed(rho), _) => return Ok(fixed_setup(cfg, output_dim, rho)),
        (Rho::Auto, Some(s)) => bbox_diagonal(s),
        (Rho::Auto, None) => return Err(CliError::Config("rho = \"auto\" needs samples".into())),
    };
    Ok(match cfg.risk.radius_space {
        RadiusSpace::Perf => RadiusSetup {
            dim: 1,
            lipschitz: 1.0,
            rho: l0 * spread,
        },
        RadiusSpace::Output => RadiusSetup {
            dim: output_dim,
            lipschitz: l0,
            rho: spread,
        },
    })
}

fn fixed_setup(cfg: &RunConfig, output_dim: usize, rho: f64) -> RadiusSetup {
    match cfg.risk.radius_space {
        RadiusSpace::Perf => RadiusSetup {
            dim: 1,
            lipschitz: 1.0,
            rho,
        },
        RadiusSpace::Output => RadiusSetup {
            dim: output_dim,
            lipschitz: cfg.lipschitz(),
            rho,
        },
    }
}

fn risk_spec(alpha: f64, beta: f64, h: f64, r: &RadiusSetup) -> RiskSpec {
    RiskSpec {
        alpha,
        beta,
        target_half_width: h,
        lipschitz: r.lipschitz,
        rho: r.rho,
        dim: r.dim,
    }
}

fn plan_entries(cfg: &RunConfig, r: &RadiusSetup) -> CliResult<Vec<PlanEntry>> {
    let mut out = Vec::new();
    for &alpha in &cfg.risk.alphas {
        for &beta in &cfg.risk.betas {
            for &h in &cfg.risk.h {
                let n = plan_cvar_samples(&risk_spec(alpha, beta, h, r))?;
                out.push(PlanEntry { alpha, beta, h, n });
            }
        }
    }
    Ok(out)
}

fn scenario_n(cfg: &RunConfig, output_dim: usize) -> CliResult<u64> {
    let template = make_template(cfg.template, output_dim)?;
    Ok(scenario_sample_size(
        cfg.scenario.eps1,
        cfg.scenario.beta1,
        output_dim,
        template.len(),
    )?)
}

fn draw(model: &BnnModel, cfg: &RunConfig, n: usize) -> CliResult<OutputSamples> {
    Ok(collect_outputs(model, &cfg.input, n, cfg.seed)?)
}

/// Sample sizes for the configuration, plus the samples when drawing them
/// was needed to estimate the spread.
fn plan_with_samples(cfg: &RunConfig, model: &BnnModel) -> CliResult<(Plan, Option<OutputSamples>)> {
    let output_dim = model.output_dim();
    let scenario_n = scenario_n(cfg, output_dim)?;
    let mut warnings = Vec::new();
    let fixed = match cfg.n_samples {
        SampleCount::Fixed(n) => Some(n),
        SampleCount::Plan => None,
    };

    if let Rho::Fixed(rho) = cfg.risk.rho {
        let radius = fixed_setup(cfg, output_dim, rho);
        let cvar = plan_entries(cfg, &radius)?;
        let needed = cvar.iter().map(|e| e.n).max().unwrap_or(1).max(scenario_n);
        let n_samples = fixed.unwrap_or(to_usize(needed)?);
        if (n_samples as u64) < needed {
            warnings.push(format!("n_samples = {n_samples} is below the planned {needed}"));
        }
        let plan = Plan {
            scenario_n,
            radius,
            cvar,
            n_samples,
            warnings,
        };
        return Ok((plan, None));
    }

    // The spread enters the plan, and the plan decides how many samples
    // estimate the spread: grow N until the estimate no longer asks for more.
    let mut n = fixed.unwrap_or_else(|| PILOT_SAMPLES.max(scenario_n as usize));
    let mut rounds = 0;
    loop {
        let samples = draw(model, cfg, n)?;
        let radius = radius_setup(cfg, output_dim, Some(&samples))?;
        let cvar = plan_entries(cfg, &radius)?;
        let needed = cvar.iter().map(|e| e.n).max().unwrap_or(1).max(scenario_n);
        rounds += 1;
        let done = fixed.is_some() || needed <= n as u64 || rounds >= MAX_PLAN_ROUNDS;
        if done {
            if (n as u64) < needed {
                warnings.push(format!("n_samples = {n} is below the planned {needed}"));
            }
            let plan = Plan {
                scenario_n,
                radius,
                cvar,
                n_samples: n,
                warnings,
            };
            return Ok((plan, Some(samples)));
        }
        n = to_usize(needed)?;
    }
}

fn to_usize(n: u64) -> CliResult<usize> {
    usize::try_from(n).map_err(|_| CliError::Numerical(format!("planned sample size {n} does not fit in memory")))
}

/// Planned sample sizes.
pub fn cmd_plan(cfg: &RunConfig) -> CliResult<Plan> {
    let model = cfg.build_model()?;
    Ok(plan_with_samples(cfg, &model)?.0)
}

fn samples_for(cfg: &RunConfig, model: &BnnModel) -> CliResult<(Plan, OutputSamples)> {
    let (plan, samples) = plan_with_samples(cfg, model)?;
    let samples = match samples {
        Some(s) => s,
        None => draw(model, cfg, plan.n_samples)?,
    };
    Ok((plan, samples))
}

fn write_samples(cfg: &RunConfig, samples: &OutputSamples) -> CliResult<()> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    samples.write_csv(cfg.out_dir.join(SAMPLES_FILE), Some(&cfg.perf))?;
    samples.write_metadata(cfg.out_dir.join(SAMPLES_META_FILE))?;
    Ok(())
}

/// Draws the planned samples and writes them with their `h` values.
pub fn cmd_sample(cfg: &RunConfig) -> CliResult<(Plan, OutputSamples)> {
    let model = cfg.build_model()?;
    let (plan, samples) = samples_for(cfg, &model)?;
    write_samples(cfg, &samples)?;
    Ok((plan, samples))
}

/// Fits the support polytope on the planned samples.
pub fn cmd_fit(cfg: &RunConfig) -> CliResult<FittedSupport> {
    let model = cfg.build_model()?;
    let (_, samples) = samples_for(cfg, &model)?;
    let fs = fit(cfg, &samples)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    fs.save(cfg.out_dir.join(SUPPORT_FILE))?;
    Ok(fs)
}

fn fit(cfg: &RunConfig, samples: &OutputSamples) -> CliResult<FittedSupport> {
    let template = make_template(cfg.template, samples.dim())?;
    Ok(fit_support(&template, samples, cfg.scenario.eps1, cfg.scenario.beta1)?)
}

fn support_certificate(fs: &FittedSupport, seed: u64) -> Certificate {
    let mut cert = Certificate::new(
        CertificateKind::SupportSet,
        fs.theta.clone(),
        1.0 - fs.beta1,
        fs.n_used,
        seed,
    )
    .with_radius("eps1", fs.eps1)
    .with_param("beta1", fs.beta1)
    .with_param("required_samples", fs.required_samples as f64);
    if !fs.is_certified() {
        cert = cert.with_warnings([format!(
            "fitted on {} samples, fewer than the {} required",
            fs.n_used, fs.required_samples
        )]);
    }
    cert
}

/// Full run: sample, fit, certify; writes the report and the sample dump.
pub fn cmd_certify(cfg: &RunConfig) -> CliResult<Report> {
    let mut timing = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timing: &mut BTreeMap<String, f64>| {
        timing.insert(name.to_string(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };

    let model = cfg.build_model()?;
    let (plan, samples) = samples_for(cfg, &model)?;
    lap("sample", &mut timing);

    let fs = fit(cfg, &samples)?;
    let mut certificates = vec![support_certificate(&fs, cfg.seed)];
    let holdout_violation_rate = if cfg.validate.holdout > 0 {
        let holdout = collect_outputs(&model, &cfg.input, cfg.validate.holdout, derive_seed(cfg.seed, "holdout", 0))?;
        Some(fs.violation_rate(&holdout)?)
    } else {
        None
    };
    lap("fit", &mut timing);

    let values = perf_samples(&samples, &cfg.perf)?;
    let h_target = cfg.target_half_width();
    let mut empirical_cvar = Vec::new();
    for &alpha in &cfg.risk.alphas {
        empirical_cvar.push(AlphaValue {
            alpha,
            value: cvar_alpha(&values, alpha)?,
        });
        for &beta in &cfg.risk.betas {
            let spec = risk_spec(alpha, beta, h_target, &plan.radius);
            let mut cert = cvar_certified_interval(&values, &spec, cfg.seed)?;
            if matches!(cfg.risk.radius_space, RadiusSpace::Perf) {
                cert = cert.with_param("output_lipschitz", cfg.lipschitz());
            }
            certificates.push(cert);
        }
    }
    lap("cvar", &mut timing);

    let mut perf_gap = None;
    if cfg.dro.enabled && (cfg.perf.is_convex() || cfg.perf.is_concave()) {
        let mut bounds = certify_perf_bounds(&cfg.perf, &samples, &fs, cfg.dro.beta2)?;
        if cfg.dro.max_beta_confidence {
            bounds = bounds.with_max_beta_confidence();
        }
        perf_gap = Some(bounds.gamma());
        certificates.push(bounds.upper);
        certificates.push(bounds.lower);
    }
    lap("dro", &mut timing);

    let report = Report {
        config: cfg.clone(),
        samples: samples.metadata(),
        support: fs.clone(),
        certificates,
        diagnostics: Diagnostics {
            support_certified: fs.is_certified(),
            holdout_violation_rate,
            empirical_mean: cvar_alpha(&values, 1.0)?,
            empirical_cvar,
            gamma_robustness: gamma_robustness(h_target),
            perf_gap,
        },
        plan,
        timing: BTreeMap::new(),
    };

    write_samples(cfg, &samples)?;
    fs.save(cfg.out_dir.join(SUPPORT_FILE))?;
    lap("write", &mut timing);
    let report = Report { timing, ..report };
    std::fs::write(cfg.out_dir.join(REPORT_FILE), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

pub fn read_report(path: &Path) -> CliResult<Report> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Repeats the support fit on fresh samples and measures how often the
/// violation mass exceeds `eps1`.
pub fn cmd_validate(cfg: &RunConfig) -> CliResult<ValidationReport> {
    let v = cfg.validate;
    if v.holdout == 0 {
        return Err(CliError::Config("validate.holdout must be >= 1".into()));
    }
    let model = cfg.build_model()?;
    let n_samples = match cfg.n_samples {
        SampleCount::Fixed(n) => n,
        SampleCount::Plan => to_usize(scenario_n(cfg, model.output_dim())?)?,
    };
    let template = make_template(cfg.template, model.output_dim())?;
    let violation_rates = (0..v.trials as u64)
        .map(|t| {
            let fit_seed = derive_seed(cfg.seed, "validate_fit", t);
            let samples = collect_outputs(&model, &cfg.input, n_samples, fit_seed)?;
            let fs = fit_support(&template, &samples, cfg.scenario.eps1, cfg.scenario.beta1)?;
            let holdout_seed = derive_seed(cfg.seed, "validate_holdout", t);
            let holdout = collect_outputs(&model, &cfg.input, v.holdout, holdout_seed)?;
            Ok(fs.violation_rate(&holdout)?)
        })
        .collect::<CliResult<Vec<f64>>>()?;
    let (eps1, beta1) = (cfg.scenario.eps1, cfg.scenario.beta1);
    let failures = violation_rates.iter().filter(|r| **r > eps1).count();
    let failure_fraction = failures as f64 / v.trials as f64;
    let threshold = beta1 + 3.0 * (beta1 * (1.0 - beta1) / v.trials as f64).sqrt();
    let report = ValidationReport {
        trials: v.trials,
        holdout: v.holdout,
        n_samples,
        eps1,
        beta1,
        violation_rates,
        failure_fraction,
        threshold,
        within_threshold: failure_fraction <= threshold,
    };
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join(VALIDATION_FILE), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}
