mod config;

use std::io::Write;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use pais::audit::run_suite;
use pais::harness::{preprocess, run_experiment, write_outputs};
use pais::kmeans::{lloyd_profile, LloydConfig};
use pais::numeric::amplify_log;
use pais::optimal::SolverConfig;
use pais::sampler::make_optimal;
use pais::WeightedProfile;

use config::RunArgs;

const WORKERS_ENV: &str = "PAIS_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "pais", version, about = "Privacy amplification via Poisson importance sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the sampler sweep and write summary, per-run and metadata files
    Run(RunArgs),
    /// Run the audit suite; exits non-zero if any audit fails
    Audit {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// One JSON object per line instead of text
        #[arg(long)]
        json: bool,
    },
    /// Write the privacy-optimal selection probabilities per point as CSV
    Weights(RunArgs),
}

fn init_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn run(args: &RunArgs) -> Result<()> {
    let resolved = args.resolve()?;
    let out = resolved.out.unwrap_or_else(|| "summary.csv".into());
    let cfg = resolved.experiment;
    let outcome = run_experiment(&cfg)?;
    let rows = write_outputs(&out, &cfg, &outcome)?;
    eprintln!(
        "{} runs in {} groups ({} failed, {} cells skipped) -> {}",
        outcome.records.len(),
        rows.len(),
        outcome.failures.len(),
        outcome.skipped.len(),
        out.display()
    );
    for f in &outcome.failures {
        eprintln!("failed: {} B={} seed={}: {}", f.family, f.b, f.seed, f.message);
    }
    for s in &outcome.skipped {
        eprintln!("skipped: {} m={}: {}", s.family, s.m, s.reason);
    }
    Ok(())
}

fn weights(args: &RunArgs) -> Result<()> {
    let resolved = args.resolve()?;
    let cfg = resolved.experiment;
    let b = match cfg.b_list.as_slice() {
        [b] => *b,
        _ => bail!("`weights` needs exactly one --B value"),
    };
    let raw = cfg.load_points()?;
    let (points, stats) = preprocess(&raw, cfg.trim_fraction)?;
    let lloyd = LloydConfig::from_budget(cfg.k, cfg.iterations, b, stats.radius, stats.dim, cfg.rho)?;
    let profile = Arc::new(lloyd_profile(&lloyd));
    let spec = make_optimal(profile.clone(), &points, &SolverConfig::new(lloyd.full_data_epsilon())?)?;

    let mut sink: Box<dyn Write> = match &resolved.out {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(sink, "index,l1_norm,q,weight,psi")?;
    for (i, x) in points.iter().enumerate() {
        let q = spec.prob(i, x)?;
        let w = 1.0 / q;
        let psi = amplify_log(profile.eval(w, x), q);
        writeln!(sink, "{i},{},{q},{w},{psi}", x.l1_norm())?;
    }
    sink.flush()?;
    Ok(())
}

fn audit(seed: u64, json: bool) -> Result<bool> {
    let reports = run_suite(seed)?;
    let mut out = std::io::stdout().lock();
    for r in &reports {
        if json {
            writeln!(out, "{}", serde_json::to_string(r)?)?;
        } else {
            writeln!(
                out,
                "{} {:<40} observed={:.6e} bound={:.6e} tol={:.0e} samples={}",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                r.observed,
                r.bound,
                r.tolerance,
                r.samples
            )?;
        }
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    if !json {
        writeln!(out, "{} audits, {failed} failed", reports.len())?;
    }
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_workers().and_then(|()| match &cli.command {
        Command::Run(args) => run(args).map(|()| true),
        Command::Weights(args) => weights(args).map(|()| true),
        Command::Audit { seed, json } => audit(*seed, *json),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
