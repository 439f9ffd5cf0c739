use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use ricci_torus::cli;

/// Construct and certify an invariant positive-Ricci metric from weighted
/// orbit data.  All run parameters live in one TOML config; see the README
/// for the key reference.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the weighted disk: legality, simple connectivity, free action,
    /// isotropy reconstruction; dispatches small cases to their models.
    Validate { config: PathBuf },
    /// Solve the profile and the Gauss-Bonnet condition and emit the polygon
    /// geometry.
    Build { config: PathBuf },
    /// Full pipeline: build, then piecewise and smoothed Ricci
    /// certification.
    Certify { config: PathBuf },
    /// Mollification convergence ladder without certification.
    MollifyReport { config: PathBuf },
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let (path, run): (&PathBuf, fn(&cli::Config) -> cli::RunReport) = match &args.command {
        Command::Validate { config } => (config, cli::cmd_validate),
        Command::Build { config } => (config, cli::cmd_build),
        Command::Certify { config } => (config, cli::cmd_certify),
        Command::MollifyReport { config } => (config, cli::cmd_mollify_report),
    };
    let cfg = match cli::load_config(path).with_context(|| format!("loading {}", path.display())) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e:#}");
            return ExitCode::from(1);
        }
    };
    let report = run(&cfg);
    print!("{}", report.render());
    ExitCode::from(report.exit.code() as u8)
}
