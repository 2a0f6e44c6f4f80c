//! Command-line experiment runner.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use etmarl::runner::{evaluate_checkpoint, run_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "etmarl", about = "Event-triggered multi-agent policy-gradient experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a JSON config, with optional flag overrides.
    Train(TrainArgs),
    /// Evaluate a stored checkpoint without learning.
    Eval(EvalArgs),
    /// Run every *.json config in a directory, in name order.
    Grid { config_dir: PathBuf },
}

#[derive(Args)]
struct TrainArgs {
    /// Path to an experiment config (JSON).
    config: PathBuf,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    /// Comma-separated seed list, e.g. 0,1,2.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Total environment steps per seed (0 = per-environment default).
    #[arg(long)]
    steps: Option<usize>,
    /// Trigger penalty Ψ.
    #[arg(long)]
    psi: Option<f64>,
    /// Output directory root.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Path to a checkpoint.json written by `train`.
    checkpoint: PathBuf,
    /// Environment name (defaults to the checkpoint's).
    #[arg(long)]
    env: Option<String>,
    #[arg(long, default_value_t = 30)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Train(args) => {
            let mut cfg = ExperimentConfig::from_file(&args.config)
                .with_context(|| format!("loading {}", args.config.display()))?;
            if let Some(env) = args.env {
                cfg.env = env;
            }
            if let Some(algo) = args.algo {
                cfg.algo = algo;
            }
            if let Some(variant) = args.variant {
                cfg.variant = variant;
            }
            if let Some(seeds) = args.seeds {
                cfg.seeds = seeds;
            }
            if let Some(steps) = args.steps {
                cfg.total_steps = steps;
            }
            if let Some(psi) = args.psi {
                cfg.train.psi = psi;
            }
            if let Some(out) = args.out {
                cfg.out_dir = out;
            }
            let dir = run_experiment(&cfg)?;
            println!("completed: {}", dir.display());
            Ok(())
        }
        Command::Eval(args) => {
            let summary =
                evaluate_checkpoint(&args.checkpoint, args.env.as_deref(), args.episodes, args.seed)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
        Command::Grid { config_dir } => {
            let mut configs: Vec<PathBuf> = std::fs::read_dir(&config_dir)
                .with_context(|| format!("reading {}", config_dir.display()))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
                .collect();
            configs.sort();
            if configs.is_empty() {
                bail!("no *.json configs found in {}", config_dir.display());
            }
            for path in configs {
                let cfg = ExperimentConfig::from_file(&path)
                    .with_context(|| format!("loading {}", path.display()))?;
                println!("running {}", path.display());
                let dir = run_experiment(&cfg)?;
                println!("completed: {}", dir.display());
            }
            Ok(())
        }
    }
}
