use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

mod commands;
mod config;

use commands::{Command, Context};
use config::RunConfig;

/// Null control and shadow-limit experiments for the fast-diffusion system.
#[derive(Debug, Parser)]
#[command(name = "shadowctl", version)]
struct Cli {
    command: Command,
    /// Run configuration; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for sweeps; 0 uses all cores.
    #[arg(long, env = "SHADOWCTL_JOBS", default_value_t = 0)]
    jobs: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(path) => RunConfig::from_path(path),
        None => Ok(RunConfig::default()),
    };
    let cfg = match cfg {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let ctx = Context {
        out: cli.out.clone().unwrap_or_else(|| cfg.directory.clone()),
        seed: cli.seed,
        jobs: cli.jobs,
    };
    match commands::run(cli.command, &cfg, &ctx) {
        Ok(outcome) => {
            if cli.command != Command::Selftest {
                let text = serde_json::to_string_pretty(&outcome.json).expect("serializable");
                // a closed pipe on stdout is not a failure of the run
                let _ = writeln!(std::io::stdout().lock(), "{text}");
            }
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
