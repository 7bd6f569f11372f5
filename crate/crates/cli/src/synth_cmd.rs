//! `strec synth`: write a synthetic fixture directory that the other
//! subcommands consume without edits.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use strec_core::io::{from_json_str, write_annotations, write_predictions};
use strec_core::synth::{generate, SceneSpec};

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene spec (JSON); defaults to the built-in mixed-difficulty scene.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &SynthArgs, seed_override: Option<u64>) -> Result<()> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            from_json_str::<SceneSpec>(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => SceneSpec::default_spec(),
    };
    if let Some(seed) = seed_override {
        spec.seed = seed;
    }

    let scene = generate(&spec)?;
    let colmap_dir = args.out.join("colmap");
    std::fs::create_dir_all(&colmap_dir)
        .with_context(|| format!("creating {}", colmap_dir.display()))?;

    write_annotations(&args.out.join("annotations.json"), &scene.annotations)?;
    write_predictions(&args.out.join("predictions.json"), &scene.predictions)?;
    std::fs::write(colmap_dir.join("cameras.txt"), scene.colmap_cameras_text())?;
    std::fs::write(colmap_dir.join("images.txt"), scene.colmap_images_text())?;

    eprintln!(
        "wrote scene {} ({} frames, {:.0}% target-free) to {}",
        scene.clip_id,
        scene.frames.len(),
        scene.target_free_fraction() * 100.0,
        args.out.display()
    );
    Ok(())
}
