//! `strec fuse`: tracking-by-detection over a multi-candidate detection
//! stream, confidence averaging along tracks, per-frame re-selection.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use rayon::prelude::*;
use strec_core::io::{
    detections_of_clip, load_predictions, write_predictions, write_tracks, PredictionClip,
    PredictionFile, PredictionFrame, ScoredBox, TrackClip, TrackEntryRecord, TrackFile,
    TrackRecord,
};
use strec_core::tracking::{fuse_scores, run_tracker, top1_by_frame, Track, TrackerConfig};

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Multi-candidate detection stream (prediction schema).
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// No-object operating point: frames whose best effective score falls
    /// below it emit no box. Choose it from the ROC curve.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Also write the raw tracks (JSON) here.
    #[arg(long)]
    pub tracks: Option<PathBuf>,
}

fn track_records(tracks: &[Track]) -> Vec<TrackRecord> {
    tracks
        .iter()
        .map(|t| TrackRecord {
            track_id: t.track_id,
            fused_score: t.fused_score,
            entries: t
                .entries
                .iter()
                .map(|e| TrackEntryRecord {
                    frame_index: e.frame_index,
                    bbox: e.bbox.corners().expect("track entries hold present boxes"),
                    score: e.score,
                })
                .collect(),
        })
        .collect()
}

fn fuse_one_clip(
    clip: &PredictionClip,
    cfg: &TrackerConfig,
    threshold: Option<f64>,
) -> Result<(PredictionClip, TrackClip)> {
    let detections = detections_of_clip(clip);
    let mut tracks = run_tracker(&detections, cfg)?;
    let top1 = top1_by_frame(&detections);
    let fused = fuse_scores(&mut tracks, &top1, threshold);

    let frames = clip
        .frames
        .iter()
        .map(|f| {
            let boxes = match fused.get(&f.frame_index) {
                Some(sel) => match sel.bbox.corners() {
                    Some(corners) => vec![ScoredBox {
                        bbox: corners,
                        score: sel.score,
                    }],
                    None => vec![],
                },
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
            frames,
        },
        TrackClip {
            clip_id: clip.clip_id.clone(),
            tracks: track_records(&tracks),
        },
    ))
}

pub fn run(args: &FuseArgs, cfg: &TrackerConfig) -> Result<()> {
    let input = load_predictions(&args.detections)
        .with_context(|| format!("loading {}", args.detections.display()))?;

    let fused: Vec<(PredictionClip, TrackClip)> = input
        .clips
        .par_iter()
        .map(|clip| fuse_one_clip(clip, cfg, args.threshold))
        .collect::<Result<_>>()?;

    let (pred_clips, track_clips): (Vec<_>, Vec<_>) = fused.into_iter().unzip();
    write_predictions(&args.out, &PredictionFile { clips: pred_clips })?;
    if let Some(tracks_path) = &args.tracks {
        write_tracks(tracks_path, &TrackFile { clips: track_clips })?;
    }
    eprintln!(
        "fused {} clip(s) -> {}",
        input.clips.len(),
        args.out.display()
    );
    Ok(())
}
