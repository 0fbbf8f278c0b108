//! `labelforge` command line: synth → pack → train-baseline → predict → eval → blend → report,
//! plus `demo` running the whole loop on the bundled farmhouse.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{BlendArgs, ConfigFile, DemoArgs, EvalArgs, PackArgs, PredictArgs, SynthArgs, TrainArgs};

#[derive(Parser, Debug)]
#[command(name = "labelforge", version, about = "Paired photoreal/label image synthesis and segmentation scoring")]
struct Cli {
    /// TOML config; command-line flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every randomized step
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true, env = "LABELFORGE_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render every view × lighting state and pack the dataset
    Synth(SynthArgs),
    /// Pack a raw render directory into a dataset
    Pack(PackArgs),
    /// Fit the nearest-centroid baseline on a dataset's train split
    TrainBaseline(TrainArgs),
    /// Run the baseline over a dataset split
    Predict(PredictArgs),
    /// Score predictions against ground-truth label images
    Eval(EvalArgs),
    /// Fuse per-view label images onto a mesh
    Blend(BlendArgs),
    /// Print a report written by `eval` or `demo`
    Report {
        /// Report directory or file
        path: PathBuf,
    },
    /// Write the bundled farmhouse scene and its ten-view pose file
    Fixture {
        #[arg(long)]
        out: PathBuf,
    },
    /// End-to-end run on the bundled farmhouse
    Demo(DemoArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    if let Some(n) = cli.workers.or(file.workers) {
        anyhow::ensure!(n > 0, "worker count must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    match cli.command {
        Command::Synth(mut a) => {
            a.camera = a.camera.clone().overlay(file.camera.clone());
            commands::synth(a.overlay(file.synth), seed)
        }
        Command::Pack(a) => commands::pack(a.overlay(file.pack), seed),
        Command::TrainBaseline(a) => commands::train(a.overlay(file.train_baseline)),
        Command::Predict(a) => commands::predict(a.overlay(file.predict)),
        Command::Eval(a) => commands::eval(a.overlay(file.eval)),
        Command::Blend(a) => commands::blend(a.overlay(file.blend)),
        Command::Report { path } => commands::report(&path),
        Command::Fixture { out } => commands::fixture(&out),
        Command::Demo(mut a) => {
            a.camera = a.camera.clone().overlay(file.camera.clone());
            commands::demo(a.overlay(file.demo), seed)
        }
    }
}

use config::Overlay;

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
