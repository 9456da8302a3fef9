//! Command-line harness: run configured Monte Carlo experiments, validate
//! configuration files, and exercise the moment oracle.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gismooth::config::ExperimentConfig;
use gismooth::experiment::run_experiment;
use gismooth::quadrature::run_oracle_suite;
use gismooth::report::write_reports;

/// Acceptance threshold for the closed-form-vs-quadrature comparison.
const ORACLE_TOLERANCE: f64 = 1e-8;

#[derive(Parser)]
#[command(
    name = "gismooth",
    version,
    about = "Monte Carlo benchmark harness for polynomial Gaussian smoothing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSV reports.
    Run {
        /// Configuration file path.
        #[arg(long)]
        config: PathBuf,
        /// Override the configured Monte Carlo run count.
        #[arg(long)]
        runs: Option<usize>,
        /// Override the configured master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the strategy list (comma separated, e.g. "gi,ekf").
        #[arg(long)]
        strategies: Option<String>,
    },
    /// Check a configuration file and print the effective configuration.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare closed-form expectations against tensor Gauss-Hermite
    /// quadrature on random polynomials and print the max relative error.
    Oracle {
        /// State dimension of the random beliefs.
        #[arg(long)]
        dim: usize,
        /// Maximum total degree of the random polynomials.
        #[arg(long)]
        degree: u32,
        /// Number of random cases.
        #[arg(long)]
        cases: usize,
    },
}

fn main() -> ExitCode {
    // clap itself exits with code 2 on unknown flags or missing arguments.
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            if matches!(err, gismooth::Error::Io { .. }) {
                eprintln!("usage: gismooth <run|validate|oracle> --help");
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

/// Prints without panicking when stdout is a closed pipe.
fn emit(line: std::fmt::Arguments<'_>) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{line}");
}

macro_rules! out {
    ($($arg:tt)*) => { emit(format_args!($($arg)*)) };
}

fn execute(cli: Cli) -> gismooth::Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            runs,
            seed,
            out,
            strategies,
        } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(runs) = runs {
                cfg.runs = runs;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(list) = strategies {
                cfg.strategies = list
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
            }
            cfg.validate()?;

            let report = run_experiment(&cfg)?;
            print_summary(&report);
            let written = write_reports(&report, &cfg, &cfg.output_dir)?;
            for path in written {
                out!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            out!("{}", cfg.to_config_text().trim_end());
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { dim, degree, cases } => {
            let report = run_oracle_suite(dim, degree, cases, 0xD1CE)?;
            out!(
                "oracle: {} cases, dim {dim}, degree <= {degree}, max relative error {:.3e}",
                report.cases,
                report.max_relative_error
            );
            if report.max_relative_error <= ORACLE_TOLERANCE {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!(
                    "error: max relative error {:.3e} exceeds {ORACLE_TOLERANCE:.0e}",
                    report.max_relative_error
                );
                Ok(ExitCode::FAILURE)
            }
        }
    }
}

fn print_summary(report: &gismooth::experiment::RmseReport) {
    let mut header = format!("{:<8}{:<10}", "method", "kind");
    for i in 1..=report.state_dim {
        header.push_str(&format!("{:<12}", format!("state{i}")));
    }
    header.push_str(&format!("{:<10}{}", "ret", "diverged"));
    out!("{header}");
    for method in &report.methods {
        for (kind, avg, ret) in [
            (
                "filter",
                method.stats.as_ref().map(|s| &s.filter_avg),
                method.stats.as_ref().map(|s| s.filter_ret),
            ),
            (
                "smoother",
                method.stats.as_ref().map(|s| &s.smoother_avg),
                method.stats.as_ref().map(|s| s.smoother_ret),
            ),
        ] {
            let mut line = format!("{:<8}{:<10}", method.name, kind);
            match (avg, ret) {
                (Some(avg), Some(ret)) => {
                    for value in avg {
                        line.push_str(&format!("{value:<12.6}"));
                    }
                    line.push_str(&format!("{ret:<10.3}"));
                }
                _ => {
                    for _ in 0..report.state_dim + 1 {
                        line.push_str(&format!("{:<12}", "-"));
                    }
                }
            }
            line.push_str(&method.diverged_runs.to_string());
            out!("{line}");
        }
        if method.stats.is_none() {
            eprintln!(
                "warning: every run of \"{}\" diverged; no statistics reported",
                method.name
            );
        }
    }
}
