use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pbfree_cli::config::{parse_config, ConfigError, Subcommand};
use pbfree_cli::run::{run, RunError, EXIT_CONFIG};

/// Experiment runner for smoothed free boundary problems.
#[derive(Debug, Parser)]
#[command(name = "pbfree", version)]
struct Cli {
    /// Pipeline to run; overrides `run.subcommand` from the config.
    #[arg(value_enum)]
    subcommand: Option<Subcommand>,
    /// Configuration file (`section.key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Maximum number of concurrent sweep entries.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Seed; overrides `solver.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match &cli.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                let err = RunError::Config(ConfigError::Read(format!("{}: {e}", path.display())));
                eprintln!("error: {err}");
                return ExitCode::from(EXIT_CONFIG as u8);
            }
        },
        None => String::new(),
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    if let Some(s) = cli.subcommand {
        cfg.subcommand = Some(s);
    }
    if let Some(dir) = cli.out {
        cfg.output.directory = dir;
    }
    if let Some(seed) = cli.seed {
        cfg.solver.seed = seed;
    }
    match run(&cfg, cli.jobs.max(1)) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
