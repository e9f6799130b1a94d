//! `fcl`: run experiments, the validation suite, and partition audits.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fcl_core::experiment::{partition_audit, run_experiment, ExperimentConfig, SEED_OVERRIDE_VAR};
use fcl_core::validation::run_validation_suite;

#[derive(Parser)]
#[command(name = "fcl", version, about = "Federated contrastive learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every grid cell and seed of a config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads for client updates within a round.
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Gradient checks and exact-MI bound checks.
    Validate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print partition manifests and per-client label histograms.
    PartitionAudit {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load_config(path: &PathBuf) -> Result<(ExperimentConfig, String), String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut cfg = ExperimentConfig::from_toml_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Ok(list) = std::env::var(SEED_OVERRIDE_VAR) {
        cfg.override_seeds(&list).map_err(|e| e.to_string())?;
    }
    Ok((cfg, text))
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run { config, out, threads } => {
            let (cfg, text) = load_config(&config)?;
            let cells = run_experiment(&cfg, &text, &out, threads).map_err(|e| format!("run aborted: {e}"))?;
            eprintln!("{} cell(s) finished, results in {}", cells.len(), out.display());
            Ok(())
        }
        Command::Validate { out, seed } => {
            let report = run_validation_suite(seed).map_err(|e| e.to_string())?;
            fs::create_dir_all(&out).map_err(|e| e.to_string())?;
            let path = out.join("validation_report.txt");
            fs::write(&path, report.text()).map_err(|e| e.to_string())?;
            print!("{}", report.text());
            if report.passed() {
                Ok(())
            } else {
                Err(format!("failed checks: {}", report.failures().join(", ")))
            }
        }
        Command::PartitionAudit { config } => {
            let (cfg, _) = load_config(&config)?;
            print!("{}", partition_audit(&cfg).map_err(|e| e.to_string())?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
