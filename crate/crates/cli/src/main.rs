//! `casimir`: theory curves, calibration, precision analysis and synthetic
//! experiments from one JSON config.
//!
//! Exit codes: 0 success, 2 I/O or configuration, 3 insufficient data,
//! 4 grid alignment, 5 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use casimir_core::Error;
use clap::{Parser, Subcommand};

use crate::config::{Loaded, Overrides};

#[derive(Parser, Debug)]
#[command(name = "casimir", version, about = "Sphere-plate Casimir force pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Random seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Relative tolerance of the Lifshitz quadrature.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Write the theoretical force at the configured separations.
    Theory,
    /// Fit m, z0, V2 and the force scale from calibration scans.
    Calibrate,
    /// Average calibrated force scans and compare them with theory.
    Analyze,
    /// Generate a synthetic experiment with known truth.
    Synth,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. }
        | Error::Config(_)
        | Error::Parse { .. }
        | Error::Validation(_)
        | Error::Calibration(_)
        | Error::Generation(_) => 2,
        Error::InsufficientData(_) => 3,
        Error::Alignment(_) => 4,
        Error::Numeric { .. } | Error::FitFailed { .. } | Error::SingularFit(_) | Error::Domain(_) | Error::Validity(_) => 5,
    }
}

fn run(cli: &Cli) -> casimir_core::Result<String> {
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        tolerance: cli.tolerance,
    };
    let loaded = Loaded::from_path(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Theory => commands::theory(&loaded),
        Command::Calibrate => commands::calibrate_cmd(&loaded),
        Command::Analyze => commands::analyze(&loaded),
        Command::Synth => commands::synth(&loaded),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("casimir {:?}: {e}", cli.command);
            if let Error::FitFailed { trace, .. } = &e {
                if let Some(last) = trace.last() {
                    eprintln!("  last cost {last:e} after {} accepted steps", trace.len().saturating_sub(1));
                }
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_follow_the_contract() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::InsufficientData("x".into())), 3);
        assert_eq!(exit_code(&Error::Alignment("x".into())), 4);
        assert_eq!(
            exit_code(&Error::FitFailed {
                message: "x".into(),
                trace: vec![]
            }),
            5
        );
    }

    #[test]
    fn flags_parse_anywhere() {
        let cli = Cli::try_parse_from(["casimir", "synth", "--seed", "9", "--out", "o", "--tolerance", "1e-5"]).unwrap();
        assert_eq!(cli.seed, Some(9));
        assert_eq!(cli.tolerance, Some(1e-5));
        assert!(Cli::try_parse_from(["casimir", "plot"]).is_err());
    }
}
