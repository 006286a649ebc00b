//! Command-line pipeline: synthesize corpora, pre-train, fine-tune,
//! evaluate, attribute, and export latents, each into a reproducible run
//! directory carrying the resolved configuration.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ecgfuse",
    about = "Multi-lead ECG variational autoencoder with hierarchical latent fusion",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic multi-lead ECG corpus.
    Synth(commands::SynthArgs),
    /// Unsupervised pre-training of the per-lead encoders and shared decoder.
    Pretrain(commands::PretrainArgs),
    /// Frozen-encoder fine-tuning with stratified cross-validation.
    Finetune(commands::FinetuneArgs),
    /// Metrics (and optional subgroup breakdown) for a fine-tuned checkpoint.
    Evaluate(commands::EvaluateArgs),
    /// Integrated-gradients attribution ratios per lead and wave.
    Interpret(commands::InterpretArgs),
    /// Export per-record latent means (leads, PoE, MoE).
    ExportLatents(commands::ExportLatentsArgs),
}

/// Run-directory root: $ECGFUSE_RUN_ROOT when set, else the working
/// directory.
pub fn run_root() -> PathBuf {
    std::env::var_os("ECGFUSE_RUN_ROOT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => commands::synth(args),
        Command::Pretrain(args) => commands::pretrain(args),
        Command::Finetune(args) => commands::finetune(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Interpret(args) => commands::interpret(args),
        Command::ExportLatents(args) => commands::export_latents(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
