//! `depthfuse` command-line front end.

mod cmd;
mod config;
mod exit;
mod manifest;
mod provider;
mod weights;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "depthfuse", version, about = "Edge-aware refinement of monocular depth maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract edges and write the edge map, mask and edge-highlighted image.
    Edges(cmd::edges::EdgesArgs),
    /// Fuse pre-computed depth maps and optionally refine them.
    Pipeline(cmd::pipeline::PipelineArgs),
    /// Evaluate predicted depth maps against ground truth.
    Eval(cmd::eval::EvalArgs),
    /// Add Gaussian noise or blur to PNG images.
    Degrade(cmd::degrade::DegradeArgs),
    /// Train the fusion network on pseudo-labelled pairs.
    TrainLfm(cmd::train::TrainLfmArgs),
    /// Train the consistency network on multi-scale depth groups.
    TrainDcm(cmd::train::TrainDcmArgs),
    /// Write synthetic scenes and toy training sets.
    Synth(cmd::synth::SynthArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Edges(a) => cmd::edges::run(a),
        Command::Pipeline(a) => cmd::pipeline::run(a),
        Command::Eval(a) => cmd::eval::run(a),
        Command::Degrade(a) => cmd::degrade::run(a),
        Command::TrainLfm(a) => cmd::train::run_lfm(a),
        Command::TrainDcm(a) => cmd::train::run_dcm(a),
        Command::Synth(a) => cmd::synth::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit::code_for(&e)
        }
    }
}
