//! `strec triangulate`: the 3D-projection refinement over COLMAP
//! reconstructions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use strec_core::geometry::BBox2D;
use strec_core::io::{
    load_frame_map, load_predictions, load_reconstruction, top1_of_frame, write_diagnostics,
    write_predictions, ClipDiagnostics, ColmapReconstruction, DiagnosticsFile, FrameMap,
    PredictionClip, PredictionFile, PredictionFrame, ScoredBox,
};
use strec_core::triangulation::{refine_clip, ReplaceMode, TriangulationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Always,
    OnlyAbsent,
    Never,
}

impl From<ModeArg> for ReplaceMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Always => ReplaceMode::Always,
            ModeArg::OnlyAbsent => ReplaceMode::OnlyAbsent,
            ModeArg::Never => ReplaceMode::Never,
        }
    }
}

#[derive(Debug, Args)]
pub struct TriangulateArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    /// Reconstruction directory: either cameras.txt/images.txt directly,
    /// or one subdirectory per clip id.
    #[arg(long)]
    pub colmap: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-corner residuals, inlier counts and failure flags (JSON).
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    /// Explicit image-name to frame-index map, overriding stem matching.
    #[arg(long)]
    pub frame_map: Option<PathBuf>,
}

fn reconstruction_for(
    root: &Path,
    clip_id: &str,
    shared: &Option<ColmapReconstruction>,
) -> Result<ColmapReconstruction> {
    let clip_dir = root.join(clip_id);
    if clip_dir.join("cameras.txt").is_file() {
        return load_reconstruction(&clip_dir)
            .with_context(|| format!("loading reconstruction {}", clip_dir.display()));
    }
    match shared {
        Some(recon) => Ok(recon.clone()),
        None => bail!(
            "no reconstruction for clip {clip_id}: neither {}/cameras.txt nor {}/cameras.txt",
            clip_dir.display(),
            root.display()
        ),
    }
}

fn refine_one_clip(
    clip: &PredictionClip,
    recon: &ColmapReconstruction,
    frame_map: Option<&FrameMap>,
    cfg: &TriangulationConfig,
) -> Result<(PredictionClip, ClipDiagnostics)> {
    let indices: Vec<u32> = clip.frames.iter().map(|f| f.frame_index).collect();
    let frames = recon.calibrated_frames(&indices, frame_map)?;

    let mut boxes: BTreeMap<u32, BBox2D> = BTreeMap::new();
    let mut scores: BTreeMap<u32, f64> = BTreeMap::new();
    for f in &clip.frames {
        let (bbox, score) = top1_of_frame(f);
        boxes.insert(f.frame_index, bbox);
        if let Some(s) = score {
            scores.insert(f.frame_index, s);
        }
    }

    let refined = refine_clip(&boxes, &frames, &recon.cameras, cfg);

    let out_frames = clip
        .frames
        .iter()
        .map(|f| {
            let boxes = match refined.frames[&f.frame_index].corners() {
                Some(corners) => vec![ScoredBox {
                    bbox: corners,
                    // geometric boxes carry no model confidence of their
                    // own; reuse the frame's top-1 score when it had one
                    score: scores.get(&f.frame_index).copied().unwrap_or(0.0),
                }],
                None => vec![],
            };
            PredictionFrame {
                frame_index: f.frame_index,
                boxes,
            }
        })
        .collect();

    Ok((
        PredictionClip {
            clip_id: clip.clip_id.clone(),
            frames: out_frames,
        },
        ClipDiagnostics {
            clip_id: clip.clip_id.clone(),
            failed: refined.failed,
            failure: refined.failure,
            corners: refined.diagnostics,
        },
    ))
}

pub fn run(args: &TriangulateArgs, base_cfg: &TriangulationConfig) -> Result<()> {
    let mut cfg = *base_cfg;
    if let Some(mode) = args.mode {
        cfg.replace_mode = mode.into();
    }

    let input = load_predictions(&args.predictions)
        .with_context(|| format!("loading {}", args.predictions.display()))?;
    let frame_map = args.frame_map.as_deref().map(load_frame_map).transpose()?;

    let shared = if args.colmap.join("cameras.txt").is_file() {
        Some(
            load_reconstruction(&args.colmap)
                .with_context(|| format!("loading reconstruction {}", args.colmap.display()))?,
        )
    } else {
        None
    };

    let results: Vec<(PredictionClip, ClipDiagnostics)> = input
        .clips
        .par_iter()
        .map(|clip| {
            let recon = reconstruction_for(&args.colmap, &clip.clip_id, &shared)?;
            refine_one_clip(clip, &recon, frame_map.as_ref(), &cfg)
        })
        .collect::<Result<_>>()?;

    let (clips, diagnostics): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    for d in &diagnostics {
        if d.failed {
            eprintln!(
                "clip {}: triangulation failed ({}); predictions passed through",
                d.clip_id,
                d.failure.as_deref().unwrap_or("unknown")
            );
        }
    }
    write_predictions(&args.out, &PredictionFile { clips })?;
    if let Some(path) = &args.diagnostics {
        write_diagnostics(path, &DiagnosticsFile { clips: diagnostics })?;
    }
    Ok(())
}
