//! `scatfluct`: sweeps, figure data, S-matrix dumps and invariant checks for
//! a particle scattering off an N-level system.
//!
//! Exit codes: 0 success, 1 invariant failure, 2 configuration error,
//! 3 numerical-convergence failure.

// `!(x > 0.0)` is how NaN gets rejected along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use scatfluct::Error;
use scatfluct_cli::config::{ConfigError, RunConfig};
use scatfluct_cli::verify::CheckKind;
use scatfluct_cli::{smatrix, sweep, thermal, verify};

#[derive(Parser, Debug)]
#[command(name = "scatfluct", version, about = "Energy fluctuations of a quantum system probed by scattering particles")]
struct Cli {
    /// TOML configuration; missing keys take the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. `--set system.n=3` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for the sweep pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Work statistics over the kinetic-energy sweep, one row per direction and an averaged row.
    Sweep,
    /// Run the invariant suite; exits nonzero if any check fails.
    Verify {
        /// Seed for the random maps of the generic-map checks.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Dump the S-matrix at one total energy.
    Smatrix {
        /// Total energy.
        #[arg(long, allow_hyphen_values = true)]
        energy: f64,
    },
    /// Low- and high-energy panels of the work curves for ladders of 2, 3 and 4 levels.
    Figure2,
    /// Stochastic matrix for a thermal beam and its detailed-balance checks.
    Thermal,
    /// Print the resolved configuration as TOML.
    Config,
}

/// Why a run stopped short of success.
enum Failure {
    Invariant(String),
    Config(String),
    Convergence(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invariant(_) => 1,
            Failure::Config(_) => 2,
            Failure::Convergence(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invariant(m) | Failure::Config(m) | Failure::Convergence(m) => m,
        }
    }
}

/// Sorts an error into an exit class by walking its cause chain.
fn classify(err: anyhow::Error) -> Failure {
    let msg = format!("{err:#}");
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return Failure::Config(msg);
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::QuadratureConvergence { .. } | Error::IllConditionedComposition { .. } => Failure::Convergence(msg),
                Error::InvalidParameter { .. }
                | Error::InvalidSpec(_)
                | Error::NoOpenChannels { .. }
                | Error::ThresholdProximity { .. }
                | Error::UnsupportedDegeneracy(..)
                | Error::Inapplicable(_) => Failure::Config(msg),
                _ => Failure::Invariant(msg),
            };
        }
    }
    Failure::Invariant(msg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(dir) = cli.out {
        cfg.output.dir = dir;
    }
    if let Some(n) = cli.threads {
        configure_pool(n)?;
    }
    match cli.command {
        Command::Config => {
            print!("{}", cfg.to_toml());
        }
        Command::Sweep => {
            let s = sweep::run_sweep(&cfg).map_err(classify)?;
            println!("{} rows ({} failed) -> {}", s.rows, s.failed_rows, s.data_file);
            if let Some(e) = s.extraction_edge {
                println!("averaged <W> turns non-negative at E_p = {e:.6}");
            }
        }
        Command::Figure2 => {
            let s = sweep::run_figure2(&cfg).map_err(classify)?;
            for p in &s.panels {
                println!("N = {} {:>4}: {} rows ({} failed) -> {}", p.levels, p.panel, p.rows, p.failed_rows, p.data_file);
            }
        }
        Command::Smatrix { energy } => {
            let s = smatrix::run_smatrix(&cfg, energy).map_err(classify)?;
            println!(
                "E = {energy}: {} open levels, unitarity residual {:.3e} -> {}",
                s.open_levels.len(),
                s.unitarity_residual,
                s.data_file
            );
        }
        Command::Thermal => {
            let s = thermal::run_thermal(&cfg).map_err(classify)?;
            println!(
                "beta_tilde = {}: column residual {:.2e}, detailed balance {:.2e}, heat exchange {:.2e} -> {}",
                s.beta_tilde, s.column_residual, s.detailed_balance_residual, s.heat_exchange_residual, s.data_file
            );
            if !s.passed {
                return Err(Failure::Invariant("thermal relations violated".into()));
            }
        }
        Command::Verify { seed } => {
            let report = verify::run_verify(&cfg, seed).map_err(classify)?;
            for c in &report.checks {
                println!(
                    "{:<22} {}  {:.3e} (tol {:.0e})  {}",
                    c.name,
                    if c.passed { "PASS" } else { "FAIL" },
                    c.value,
                    c.tolerance,
                    c.detail
                );
            }
            let (inv, conv) = (report.invariant_failures(), report.convergence_failures());
            // a failed invariant outranks a convergence problem
            if inv > 0 {
                return Err(Failure::Invariant(format!("{inv} invariant check(s) failed")));
            }
            if conv > 0 {
                let names: Vec<_> = report
                    .checks
                    .iter()
                    .filter(|c| !c.passed && c.kind == CheckKind::Convergence)
                    .map(|c| c.name)
                    .collect();
                return Err(Failure::Convergence(format!("not converged: {}", names.join(", "))));
            }
            println!("all {} checks passed", report.checks.len());
        }
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn configure_pool(n: usize) -> Result<(), Failure> {
    if n == 0 {
        return Err(Failure::Config("invalid `--threads`: must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Config(format!("invalid `--threads`: {e}")))
}

#[cfg(not(feature = "parallel"))]
fn configure_pool(n: usize) -> Result<(), Failure> {
    if n == 0 {
        return Err(Failure::Config("invalid `--threads`: must be at least 1".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
