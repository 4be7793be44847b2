use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pdhg_cli::experiment::{self, summary_toml};
use pdhg_cli::sweep::{sweep, thread_count};
use pdhg_cli::{parse_config, ConfigError, ExperimentConfig};

/// Run PDHG experiments and their Lyapunov diagnostics from a TOML config.
#[derive(Parser)]
#[command(name = "pdhg-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment: trajectory CSV plus summary.
    Run { config: PathBuf },
    /// Run the grid in the config's [sweep] table.
    Sweep { config: PathBuf },
    /// Run the checks only; no trajectory CSV.
    Verify { config: PathBuf },
    /// Print resolved defaults, admissibility margin and rate constants.
    Info { config: PathBuf },
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<bool, ConfigError> {
    match command {
        Command::Run { config } => single(&load(&config)?, false),
        Command::Verify { config } => single(&load(&config)?, true),
        Command::Sweep { config } => {
            let cfg = load(&config)?;
            let (results, path) = sweep(&cfg, thread_count()?)?;
            for r in &results {
                let s = &r.outcome.summary;
                println!(
                    "cell {:>3}  c = {:<12}  s = {:<12.6e}  slope = {:<10}  {}",
                    r.cell.index,
                    s.c.map(|c| format!("{c:.6e}")).unwrap_or_else(|| "-".into()),
                    s.s,
                    s.rate_slope.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
                    if s.all_passed { "PASS" } else { "FAIL" }
                );
            }
            println!("wrote {}", path.display());
            Ok(results.iter().all(|r| r.outcome.passed()))
        }
        Command::Info { config } => {
            let info = experiment::info(&load(&config)?)?;
            print!("{}", toml::to_string(&info).expect("info serializes"));
            Ok(true)
        }
    }
}

fn single(cfg: &ExperimentConfig, checks_only: bool) -> Result<bool, ConfigError> {
    let (outcome, artifacts) = experiment::execute(cfg, checks_only)?;
    print!("{}", summary_toml(&outcome.summary));
    if let Some(path) = &artifacts.trajectory {
        eprintln!("wrote {}", path.display());
    }
    eprintln!("wrote {}", artifacts.summary.display());
    Ok(outcome.passed())
}
