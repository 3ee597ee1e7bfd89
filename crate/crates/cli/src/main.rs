use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dppbo_cli::commands;
use dppbo_cli::config::{ExperimentConfig, CONFIG_KEYS};

#[derive(Parser)]
#[command(name = "dppbo", version, about = "Batch Bayesian optimization experiments", after_long_help = CONFIG_KEYS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep and write results.csv and results.median.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, replacing `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Parallel cells, replacing `workers`.
        #[arg(long)]
        workers: Option<usize>,
        /// Also write one SVG chart per objective and batch size.
        #[arg(long)]
        plots: bool,
    },
    /// Check a config file and list every problem.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recompute reference values by brute force.
    Oracle,
    /// Run the sweep and write regret-bound monitors to bounds.csv.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn load(path: &Path, out: Option<&Path>) -> Result<ExperimentConfig, String> {
    commands::load_config(path, out).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> Result<(), String> {
    match command {
        Command::Run {
            config,
            out,
            workers,
            plots,
        } => {
            let mut cfg = load(&config, out.as_deref())?;
            cfg.plots |= plots;
            if workers == Some(0) {
                return Err("--workers must be at least 1".into());
            }
            let workers = workers.unwrap_or_else(|| cfg.worker_count());
            let art = commands::run(&cfg, workers).map_err(|e| e.to_string())?;
            println!("{}", art.results.display());
            println!("{}", art.medians.display());
            for c in &art.charts {
                println!("{}", c.display());
            }
            if !art.table.failures.is_empty() {
                return Err(format!("{} cells failed", art.table.failures.len()));
            }
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = load(&config, None)?;
            println!(
                "ok: {} strategies x {} batch sizes x {} seeds, T = {}",
                cfg.strategies.len(),
                cfg.batch_sizes.len(),
                cfg.seeds,
                cfg.iterations
            );
            Ok(())
        }
        Command::Oracle => {
            for v in commands::oracle_values().map_err(|e| e.to_string())? {
                println!("{:<40} {:.16e}", v.name, v.value);
            }
            Ok(())
        }
        Command::Bounds {
            config,
            out,
            workers,
        } => {
            let cfg = load(&config, out.as_deref())?;
            let workers = workers.unwrap_or_else(|| cfg.worker_count()).max(1);
            let path = commands::bounds(&cfg, workers).map_err(|e| e.to_string())?;
            println!("{}", path.display());
            Ok(())
        }
    }
}
