//! `coalweb`: experiment runner for the lattice Brownian web and its
//! perturbed reconstruction.

mod commands;
mod config;
mod output;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::config::{parse_seed, Settings};
use crate::output::{commit, echo_lines};
use crate::report::{RunReport, Timing};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] coalweb::Error),
    #[error("{0}")]
    Io(String),
}

#[derive(Parser)]
#[command(name = "coalweb", version, about = "Lattice Brownian web simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, decimal or 0x-prefixed hex.
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override one configuration key, `KEY=VALUE`. Repeatable.
    #[arg(long = "set", global = true, value_parser = parse_override)]
    overrides: Vec<(String, String)>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Fan of coalescing web trajectories (trajectories.csv).
    SimulateWeb,
    /// Perturbed process overlaid on the true trajectory (perturbed.csv).
    Perturb,
    /// Probability of sup-distance exceedance against epsilon (convergence.json).
    Convergence,
    /// Per-excursion band and diagonal hits (excursions.csv, estimates.json).
    Excursions,
    /// Probability of reaching the band before the diagonal point (estimates.json).
    BandBeforeDiag,
    /// Martingale claims on the rotated joint process.
    Claims,
    /// Band-before-diagonal and excursion durations under rescaling.
    ScaleCheck,
    /// Correlation after resampling scattered rows.
    Sensitivity,
    /// Correlation of functionals of the two half-plane strips.
    Independence,
    /// Self-checks of every closed-form oracle.
    ValidateOracles,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::SimulateWeb => "simulate-web",
            Command::Perturb => "perturb",
            Command::Convergence => "convergence",
            Command::Excursions => "excursions",
            Command::BandBeforeDiag => "band-before-diag",
            Command::Claims => "claims",
            Command::ScaleCheck => "scale-check",
            Command::Sensitivity => "sensitivity",
            Command::Independence => "independence",
            Command::ValidateOracles => "validate-oracles",
        }
    }
}

fn parse_override(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))
}

/// Exit status: 0 all checks passed, 2 some check failed.
fn execute(cli: Cli) -> Result<u8, CliError> {
    let start = Instant::now();
    let mut settings = Settings::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(s) = &cli.seed {
        settings.set("seed", s.clone());
    }
    if let Some(t) = cli.threads {
        settings.set("threads", t.to_string());
    }
    if let Some(o) = &cli.out {
        settings.set("out", o.display().to_string());
    }
    let seed = parse_seed(settings.raw("seed").unwrap_or("1"))?;
    let out_dir = PathBuf::from(settings.raw("out").unwrap_or("."));
    let threads = match settings.raw("threads") {
        Some(t) => t.parse().map_err(|_| CliError::Config(format!("threads: cannot parse {t:?}")))?,
        None => 0,
    };
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    let name = cli.command.name();
    if let Some(exp) = settings.raw("experiment") {
        if exp != name {
            return Err(CliError::Config(format!("config is for experiment {exp:?}, not {name:?}")));
        }
    }

    let outcome = commands::run(name, &settings, seed)?;

    let config = settings.used();
    let header = echo_lines(name, seed, &config);
    let report = RunReport::new(
        name,
        seed,
        config,
        outcome.results,
        outcome.censored,
        outcome.checks,
        Timing { wall_seconds: start.elapsed().as_secs_f64(), threads: rayon::current_num_threads() },
    );
    let mut files: Vec<(String, Vec<u8>)> =
        outcome.csvs.iter().map(|c| (c.name.clone(), c.render(&header).into_bytes())).collect();
    let mut json = serde_json::to_vec_pretty(&report).expect("report serializes");
    json.push(b'\n');
    files.push((outcome.json_name.to_string(), json));
    for path in commit(&out_dir, &files)? {
        println!("wrote {}", path.display());
    }
    for c in report.checks.iter().filter(|c| !c.pass) {
        eprintln!("check failed: {}: {}", c.name, c.detail);
    }
    Ok(if report.passed { 0 } else { 2 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("coalweb: {e}");
            ExitCode::from(1)
        }
    }
}
