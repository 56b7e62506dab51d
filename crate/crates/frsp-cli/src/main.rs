//! `frsp` — train-time structured channel pruning driven by relevance scores.

mod checkpoint;
mod config;
mod data_io;
mod report;
mod runner;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use frsp_core::scoring::Criterion;

#[derive(Parser)]
#[command(name = "frsp", version, about = "Gradual channel pruning while training, scored by class-weighted relevance propagation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full prune-while-training loop from a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score every eligible channel and dump the global table as CSV.
    Score {
        #[arg(long)]
        config: PathBuf,
        /// Score this checkpoint instead of a freshly initialized model.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        criterion: Option<Criterion>,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Cost and effort report: % params/FLOPs drop of pruned vs baseline.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        pruned: PathBuf,
        /// An effort.csv from a training run, echoed into the report.
        #[arg(long)]
        effort: Option<PathBuf>,
    },
    /// Run all criteria at matched schedules and emit a comparison CSV.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seeds (default: the config's seed).
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, seed, output } => runner::train(&config, seed, output),
        Command::Score { config, checkpoint, criterion, out } => {
            runner::score(&config, checkpoint.as_deref(), criterion, out.as_deref())
        }
        Command::Eval { config, checkpoint } => runner::eval(&config, &checkpoint),
        Command::Report { config, baseline, pruned, effort } => {
            runner::report(&config, &baseline, &pruned, effort.as_deref())
        }
        Command::Compare { config, seeds, output } => runner::compare(&config, &seeds, output),
    }
}
