use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sladecomp::harness::{emit_summary, run_experiment, ExperimentConfig};
use sladecomp::Error;

#[derive(Parser)]
#[command(name = "sladecomp", version, about = "Online end-to-end SLA decomposition experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment grid described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to the config's parallelism.
        #[arg(long)]
        parallel: Option<usize>,
        /// Comma-separated subset of the configured algorithms.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<String>>,
        /// Overrides the number of seeds per cell.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Rebuild summary.csv from a completed run directory.
    Summarize {
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a config file without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn category(e: &Error) -> &'static str {
    match e {
        Error::Config(_) | Error::InvalidInput(_) => "configuration",
        Error::Io { .. } => "io",
        Error::Integrity(_) => "integrity",
        Error::InfeasibleEnvironment(_) => "infeasible",
        Error::Numerical(_) | Error::InvariantViolation(_) => "internal",
    }
}

fn run(cli: Cli) -> sladecomp::Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            parallel,
            only,
            seeds,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.output_dir = out;
            if let Some(p) = parallel {
                cfg.parallelism = p;
            }
            if let Some(s) = seeds {
                cfg.num_seeds = s;
            }
            if let Some(only) = only {
                let unknown: Vec<String> = only
                    .iter()
                    .filter(|a| !cfg.algorithms.contains(a))
                    .map(|a| format!("--only: {a} is not among the configured algorithms"))
                    .collect();
                if !unknown.is_empty() {
                    return Err(Error::Config(unknown));
                }
                cfg.algorithms.retain(|a| only.contains(a));
            }
            let report = run_experiment(&cfg)?;
            println!(
                "{} runs written to {} (config sha256 {})",
                report.runs.len(),
                cfg.output_dir.display(),
                report.config_sha256
            );
        }
        Command::Summarize { out } => {
            let rows = emit_summary(&out)?;
            println!("{} summary rows written to {}", rows.len(), out.join("summary.csv").display());
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            cfg.validate()?;
            println!("{}: ok, {} runs", config.display(), cfg.cells()?.len() * cfg.num_seeds);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error ({}): {e}", category(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
