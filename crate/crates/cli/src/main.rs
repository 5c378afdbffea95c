//! `pda`: synthetic data, label decomposition, training, detection and
//! evaluation for phase-wise open-vocabulary action detection.

mod commands;
mod config;
mod llm;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pda_core::apa::WeightMode;
use pda_core::model::{Alignment, Filtering};
use pda_core::pipeline::Scheduler;
use pda_core::semantics::PhaseSet;
use pda_core::PdaError;

#[derive(Parser)]
#[command(
    name = "pda",
    version,
    about = "Phase-wise open-vocabulary temporal action detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with descriptions and a text encoder.
    Synth(SynthArgs),
    /// Decompose class labels into phase descriptions, filling a cache file.
    Decompose(DecomposeArgs),
    /// Encode every class's phase texts into semantic banks.
    Encode(EncodeArgs),
    /// Draw seen/unseen class splits.
    Split(SplitArgs),
    /// Train a detector on the seen classes of a split.
    Train(TrainArgs),
    /// Run a checkpoint over videos and write detections.
    Detect(DetectArgs),
    /// Score detections against the manifest's annotations.
    Eval(EvalArgs),
    /// Train and evaluate a grid of configurations over splits.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n_classes: Option<usize>,
    #[arg(long)]
    n_videos: Option<usize>,
    #[arg(long)]
    noise_std: Option<f64>,
    /// Pair classes k and k + n/2 on one shared phase each.
    #[arg(long)]
    shared_pairs: bool,
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Description cache (JSON); created if missing.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Take the labels from this manifest's vocabulary.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Labels to decompose, comma separated.
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
    /// Phase count or comma-separated tags.
    #[arg(long)]
    phases: Option<PhaseSet>,
    #[arg(long)]
    provider: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    /// Fail on cache misses instead of calling the provider.
    #[arg(long)]
    offline: bool,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    descriptions: Option<PathBuf>,
    #[arg(long)]
    encoder: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    vocab: Vec<String>,
    #[arg(long)]
    phases: Option<PhaseSet>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    fraction_seen: Option<f64>,
    #[arg(long)]
    n_splits: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Training settings shared by `train` and `ablate`.
#[derive(Args)]
struct TrainFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    warmup_epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    scheduler: Option<Scheduler>,
    #[arg(long)]
    phases: Option<PhaseSet>,
    #[arg(long)]
    filtering: Option<Filtering>,
    #[arg(long)]
    alignment: Option<Alignment>,
    #[arg(long)]
    weight_mode: Option<WeightMode>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    splits: Option<PathBuf>,
    #[arg(long)]
    split_index: Option<usize>,
    #[arg(long)]
    descriptions: Option<PathBuf>,
    #[arg(long)]
    encoder: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch loss CSV; defaults to the checkpoint path with `.loss.csv`.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    splits: Option<PathBuf>,
    #[arg(long)]
    split_index: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    vocab: Vec<String>,
    #[arg(long)]
    descriptions: Option<PathBuf>,
    #[arg(long)]
    encoder: Option<PathBuf>,
    /// Detections as JSON lines.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    detections: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    splits: Option<PathBuf>,
    #[arg(long)]
    split_index: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    vocab: Vec<String>,
    /// tIoU thresholds, comma separated.
    #[arg(long, value_delimiter = ',')]
    thresholds: Vec<f64>,
    /// mAP per threshold as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    per_class: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    splits: Option<PathBuf>,
    #[arg(long)]
    descriptions: Option<PathBuf>,
    #[arg(long)]
    encoder: Option<PathBuf>,
    /// Vary the phase count over 1..=4 instead of reading a grid.
    #[arg(long)]
    phase_sweep: bool,
    /// Run the built-in synthetic transfer benchmark instead.
    #[arg(long)]
    transfer: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Results CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    flags: TrainFlags,
}

fn exit_code(err: &PdaError) -> u8 {
    match err {
        PdaError::Config(_) | PdaError::InvalidArgument(_) => 2,
        PdaError::Divergence { .. } | PdaError::NonFinite { .. } => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Decompose(a) => commands::decompose(a),
        Command::Encode(a) => commands::encode(a),
        Command::Split(a) => commands::split(a),
        Command::Train(a) => commands::train(a),
        Command::Detect(a) => commands::detect(a),
        Command::Eval(a) => commands::eval(a),
        Command::Ablate(a) => commands::ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
