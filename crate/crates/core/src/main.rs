use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use evsched::cli::{cmd_baseline, cmd_evaluate, cmd_gen_fleet, cmd_schedule, cmd_train, RunConfig};

/// Schedules an EV fleet's charging/discharging against a demand-response
/// target curve with a deep Q-learning agent.
#[derive(Parser)]
#[command(name = "evsched", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's out_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed (overrides the config's seed).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy; writes checkpoint, history CSV and run manifest.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint against the target and baseline curves.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Network checkpoint produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Emit the greedy-rollout schedule of a checkpoint as CSV.
    Schedule {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Emit the uncoordinated first-come-first-served schedule and curve.
    Baseline {
        #[command(flatten)]
        common: Common,
    },
    /// Generate the configured fleet and write it as fleet.csv.
    GenFleet {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> evsched::Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.hp.rng_seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> evsched::Result<()> {
    match &cli.command {
        Command::Train { common } => cmd_train(&load_config(common)?),
        Command::Evaluate { common, checkpoint } => {
            cmd_evaluate(&load_config(common)?, checkpoint)
        }
        Command::Schedule { common, checkpoint } => {
            cmd_schedule(&load_config(common)?, checkpoint)
        }
        Command::Baseline { common } => cmd_baseline(&load_config(common)?),
        Command::GenFleet { common } => cmd_gen_fleet(&load_config(common)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("evsched: error[{}]: {e}", e.class());
            ExitCode::FAILURE
        }
    }
}
