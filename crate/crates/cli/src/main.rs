use std::path::PathBuf;
use std::process::ExitCode;

use bnncert_cli::{cmd_certify, cmd_fit, cmd_plan, cmd_sample, cmd_validate, exit, CliError, CliResult, RunConfig};
use clap::{Parser, Subcommand};

/// Risk-averse certification of Bayesian neural networks.
///
/// Exit codes: 0 success, 1 I/O or other failure, 2 configuration error,
/// 3 numerical failure.
#[derive(Parser)]
#[command(name = "bnncert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Print scenario and CVaR sample sizes.
    Plan,
    /// Draw output samples and write them as CSV.
    Sample,
    /// Fit the support polytope.
    Fit,
    /// Sample, fit and certify; writes report.json.
    Certify,
    /// Repeat the support fit on fresh seeds and check the violation rate.
    Validate,
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let path = cli.config.ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    match cli.command {
        Command::Plan => json(&cmd_plan(&cfg)?),
        Command::Sample => {
            let (plan, samples) = cmd_sample(&cfg)?;
            println!("wrote {} samples ({} planned) to {}", samples.len(), plan.n_samples, cfg.out_dir.display());
        }
        Command::Fit => json(&cmd_fit(&cfg)?),
        Command::Certify => {
            let report = cmd_certify(&cfg)?;
            json(&report.certificates);
        }
        Command::Validate => json(&cmd_validate(&cfg)?),
    }
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).unwrap_or_default());
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("bnncert: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
