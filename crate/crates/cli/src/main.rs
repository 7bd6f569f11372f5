//! Batch front end for the strec toolkit: evaluate, roc, fuse,
//! triangulate and synth subcommands. Reports go to stdout, diagnostics
//! to stderr; the exit code is 0 iff no errors occurred.

mod config;
mod evaluate;
mod fuse;
mod report;
mod roc;
mod synth_cmd;
mod triangulate;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::FileConfig;

#[derive(Parser)]
#[command(
    name = "strec",
    version,
    about = "Spatio-temporal evaluation and refinement of video referring-expression predictions"
)]
struct Cli {
    /// Config file (JSON or TOML) with [tracker] and [triangulation]
    /// sections; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for clip-parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed override for synthetic generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score predictions against annotations and print the metric table.
    Evaluate(evaluate::EvaluateArgs),
    /// ROC curve and AUC of no-referred-object discrimination.
    Roc(roc::RocArgs),
    /// Track detections across frames and fuse confidences.
    Fuse(fuse::FuseArgs),
    /// Refine predictions through the 3D-projection baseline.
    Triangulate(triangulate::TriangulateArgs),
    /// Generate a synthetic fixture directory.
    Synth(synth_cmd::SynthArgs),
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("initializing thread pool")?;
    }
    let cfg = FileConfig::load(cli.config.as_deref())?;

    match &cli.command {
        Command::Evaluate(args) => evaluate::run(args),
        Command::Roc(args) => roc::run(args),
        Command::Fuse(args) => fuse::run(args, &cfg.tracker),
        Command::Triangulate(args) => triangulate::run(args, &cfg.triangulation),
        Command::Synth(args) => synth_cmd::run(args, cli.seed),
    }
}
