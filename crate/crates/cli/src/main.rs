use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use biogait_cli::{commands, resolve_config, Overrides};
use clap::{Parser, Subcommand};

/// Reference-driven gait simulation: train, identify and evaluate.
#[derive(Parser)]
#[command(name = "biogait", version)]
struct Cli {
    /// TOML run config; defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Rollout worker threads (0 = all cores). Does not change results.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Subject from the roster.
    #[arg(long, global = true)]
    subject: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic reference gait and subject entry.
    SynthRef,
    /// Train a policy with PPO.
    Train,
    /// Identify simulation parameters for a trained policy with CMA-ES.
    Identify,
    /// Alternate policy refinement and parameter identification.
    Loop,
    /// Evaluate a trained policy against the reference.
    Eval,
}

fn run(cli: Cli) -> Result<()> {
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
        workers: cli.workers,
        subject: cli.subject,
    };
    let cfg = resolve_config(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::SynthRef => {
            commands::synth_ref(&cfg)?;
        }
        Command::Train => {
            commands::train(&cfg)?;
        }
        Command::Identify => {
            commands::identify(&cfg)?;
        }
        Command::Loop => {
            let report = commands::run_loop(&cfg)?;
            eprintln!("converged: {}  final epsilon {:.3}", report.converged, report.final_epsilon());
        }
        Command::Eval => {
            commands::eval(&cfg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
