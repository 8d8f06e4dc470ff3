use std::path::PathBuf;
use std::process::ExitCode;

use bdl::error::{BdlError, Result};
use bdl::harness::{evaluate_checkpoint, run_experiment, write_dataset, ExperimentConfig, Task};
use clap::{Parser, Subcommand};

/// Bayesian deep learning experiments: collaborative deep learning and its
/// variants, relational SDAE and deep Poisson factor analysis.
#[derive(Parser)]
#[command(name = "bdl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a `key = value` config file.
    Run {
        config: PathBuf,
        /// Override a config value (`key=value`); may be repeated.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Compute recall@M of a checkpoint against held-out ratings.
    Eval {
        checkpoint: PathBuf,
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        m: usize,
        /// Training ratings whose positives are excluded from the ranking.
        #[arg(long)]
        train: Option<PathBuf>,
    },
    /// Write a synthetic dataset and a matching config for a task.
    Synth {
        /// cdl, cdr, mcdl, mcdl-sym, bcdl, rsdae or dpfa
        task: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, overrides } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            for kv in overrides {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| BdlError::Argument(format!("--set expects key=value, got `{}`", kv)))?;
                cfg.set(k.trim(), v.trim())?;
            }
            let summary = run_experiment(&cfg)?;
            match summary.headline {
                Some((name, value)) => println!("{} = {}", name, value),
                None => println!("done"),
            }
            println!("artifacts in {}", summary.output.display());
        }
        Command::Eval {
            checkpoint,
            ratings,
            m,
            train,
        } => {
            let report = evaluate_checkpoint(&checkpoint, &ratings, train.as_deref(), m)?;
            println!("recall@{} = {}", m, report.mean);
            println!("users_evaluated = {}", report.n_evaluated);
        }
        Command::Synth { task, out, seed } => {
            let task = Task::parse(&task).ok_or_else(|| BdlError::config("task", format!("unknown task `{}`", task)))?;
            let config = write_dataset(task, &out, seed)?;
            println!("{}", config.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
