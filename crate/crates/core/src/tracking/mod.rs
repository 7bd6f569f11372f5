//! ByteTrack-style tracking over per-frame scored detections, and the
//! confidence-averaging fusion that re-selects the per-frame output box.

mod kalman;

pub use kalman::{kalman_predict, kalman_update, KalmanState};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{giou, nms, BBox2D};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackingError {
    #[error("kalman measurement requires a present box with positive height")]
    NonPositiveHeight,
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("invalid tracker config: {0}")]
    InvalidConfig(String),
}

/// One scored candidate box in one frame. The score is the REC confidence
/// of the upstream model; association thresholds admit values below zero,
/// so the field is an unconstrained real with expected range [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame_index: u32,
    pub bbox: BBox2D,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Active,
    Lost,
    Removed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackEntry {
    pub frame_index: u32,
    pub bbox: BBox2D,
    /// Original detection score, before any fusion.
    pub score: f64,
}

/// A temporally linked detection sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u32,
    pub entries: Vec<TrackEntry>,
    pub state: KalmanState,
    pub status: TrackStatus,
    /// Mean of entry scores, set by `fuse_scores`.
    pub fused_score: Option<f64>,
    last_matched_frame: u32,
}

impl Track {
    pub fn last_matched_frame(&self) -> u32 {
        self.last_matched_frame
    }

    fn entry_at(&self, frame_index: u32) -> Option<&TrackEntry> {
        self.entries.iter().find(|e| e.frame_index == frame_index)
    }
}

/// Association and fusion thresholds. Defaults follow the tracker's
/// published parameter set: high/low score gates 0.1 / -0.5 and the
/// 0.9 / 0.9 confidence/GIoU match gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub track_high_thresh: f64,
    pub track_low_thresh: f64,
    pub match_score_thresh: f64,
    pub match_giou_thresh: f64,
    pub nms_iou_thresh: f64,
    pub max_lost_frames: u32,
    /// When set (the default), pairs failing the strict confidence/GIoU
    /// gate may still link on any positive GIoU; disabling it reproduces
    /// the strict reading, under which only high-confidence high-overlap
    /// pairs ever match.
    pub permissive_matching: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            track_high_thresh: 0.1,
            track_low_thresh: -0.5,
            match_score_thresh: 0.9,
            match_giou_thresh: 0.9,
            nms_iou_thresh: 0.5,
            max_lost_frames: 30,
            permissive_matching: true,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackingError> {
        if self.track_low_thresh > self.track_high_thresh {
            return Err(TrackingError::InvalidConfig(format!(
                "track_low_thresh {} exceeds track_high_thresh {}",
                self.track_low_thresh, self.track_high_thresh
            )));
        }
        Ok(())
    }

    fn pair_allowed(&self, det_score: f64, giou_value: f64) -> bool {
        if det_score > self.match_score_thresh {
            return giou_value > self.match_giou_thresh;
        }
        self.permissive_matching && giou_value > 0.0
    }
}

/// Result of associating one frame of detections against live tracks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameAssociation {
    /// (track index, detection index) pairs.
    pub matches: Vec<(usize, usize)>,
    /// Detection indices that start new tracks.
    pub new_track_detections: Vec<usize>,
    /// Track indices left unmatched this frame.
    pub unmatched_tracks: Vec<usize>,
}

/// Greedy descending-GIoU matching between predicted track boxes and one
/// indexed detection subset; each side used at most once.
fn greedy_match(
    tracks: &[Track],
    track_indices: &[usize],
    detections: &[Detection],
    det_indices: &[usize],
    cfg: &TrackerConfig,
) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for &ti in track_indices {
        let predicted = tracks[ti].state.predicted_box();
        for &di in det_indices {
            if let Ok(g) = giou(&predicted, &detections[di].bbox) {
                if cfg.pair_allowed(detections[di].score, g) {
                    pairs.push((ti, di, g));
                }
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });

    let mut used_tracks = vec![false; tracks.len()];
    let mut used_dets = vec![false; detections.len()];
    let mut matches = Vec::new();
    for (ti, di, _) in pairs {
        if !used_tracks[ti] && !used_dets[di] {
            used_tracks[ti] = true;
            used_dets[di] = true;
            matches.push((ti, di));
        }
    }
    matches
}

/// Two-stage association for one frame: high-score detections are matched
/// against all live (active or lost) tracks first, then low-score
/// detections recover still-unmatched active tracks. Unmatched high-score
/// detections start new tracks. Detections are expected to be NMS-filtered.
pub fn associate_frame(
    tracks: &[Track],
    detections: &[Detection],
    cfg: &TrackerConfig,
) -> FrameAssociation {
    let live: Vec<usize> = tracks
        .iter()
        .enumerate()
        .filter(|(_, t)| t.status != TrackStatus::Removed)
        .map(|(i, _)| i)
        .collect();
    let high: Vec<usize> = detections
        .iter()
        .enumerate()
        .filter(|(_, d)| d.score >= cfg.track_high_thresh)
        .map(|(i, _)| i)
        .collect();
    let low: Vec<usize> = detections
        .iter()
        .enumerate()
        .filter(|(_, d)| d.score >= cfg.track_low_thresh && d.score < cfg.track_high_thresh)
        .map(|(i, _)| i)
        .collect();

    let mut assoc = FrameAssociation {
        matches: greedy_match(tracks, &live, detections, &high, cfg),
        ..FrameAssociation::default()
    };

    let matched_tracks: Vec<usize> = assoc.matches.iter().map(|&(t, _)| t).collect();
    let remaining_active: Vec<usize> = live
        .iter()
        .copied()
        .filter(|i| !matched_tracks.contains(i) && tracks[*i].status == TrackStatus::Active)
        .collect();
    let stage2 = greedy_match(tracks, &remaining_active, detections, &low, cfg);
    assoc.matches.extend(stage2);

    let matched_tracks: Vec<usize> = assoc.matches.iter().map(|&(t, _)| t).collect();
    let matched_dets: Vec<usize> = assoc.matches.iter().map(|&(_, d)| d).collect();
    assoc.new_track_detections = high
        .into_iter()
        .filter(|d| !matched_dets.contains(d))
        .collect();
    assoc.unmatched_tracks = live
        .into_iter()
        .filter(|t| !matched_tracks.contains(t))
        .collect();
    assoc
}

/// Runs the full tracker over a detection stream.
///
/// Frames are processed in increasing index order; within a frame,
/// detections keep their input order and are NMS-filtered first. The run
/// is deterministic: ties break by (score desc, input order) and track
/// ids are assigned in creation order. Every detection joins at most one
/// track. Returns all tracks ever created, including removed ones.
pub fn run_tracker(
    detections: &[Detection],
    cfg: &TrackerConfig,
) -> Result<Vec<Track>, TrackingError> {
    cfg.validate()?;

    let mut by_frame: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for det in detections {
        if det.bbox.is_present() {
            by_frame.entry(det.frame_index).or_default().push(*det);
        }
    }

    let mut tracks: Vec<Track> = Vec::new();
    let mut next_id = 1u32;
    let mut last_frame: Option<u32> = None;

    for (&frame, frame_dets) in &by_frame {
        let scored: Vec<(BBox2D, f64)> = frame_dets.iter().map(|d| (d.bbox, d.score)).collect();
        let kept = nms(&scored, cfg.nms_iou_thresh);
        let frame_dets: Vec<Detection> = kept.iter().map(|&i| frame_dets[i]).collect();

        let dt = last_frame.map_or(0, |prev| frame - prev);
        for track in tracks.iter_mut() {
            if track.status == TrackStatus::Removed {
                continue;
            }
            if frame - track.last_matched_frame > cfg.max_lost_frames {
                track.status = TrackStatus::Removed;
            } else if dt > 0 {
                track.state = kalman_predict(&track.state, dt);
            }
        }

        let assoc = associate_frame(&tracks, &frame_dets, cfg);
        for &(ti, di) in &assoc.matches {
            let det = &frame_dets[di];
            let track = &mut tracks[ti];
            track.state = kalman_update(&track.state, &det.bbox)?;
            track.entries.push(TrackEntry {
                frame_index: frame,
                bbox: det.bbox,
                score: det.score,
            });
            track.status = TrackStatus::Active;
            track.last_matched_frame = frame;
        }
        for &ti in &assoc.unmatched_tracks {
            if tracks[ti].status == TrackStatus::Active {
                tracks[ti].status = TrackStatus::Lost;
            }
        }
        for &di in &assoc.new_track_detections {
            let det = &frame_dets[di];
            tracks.push(Track {
                track_id: next_id,
                entries: vec![TrackEntry {
                    frame_index: frame,
                    bbox: det.bbox,
                    score: det.score,
                }],
                state: KalmanState::initiate(&det.bbox)?,
                status: TrackStatus::Active,
                fused_score: None,
                last_matched_frame: frame,
            });
            next_id += 1;
        }
        last_frame = Some(frame);
    }
    Ok(tracks)
}

/// Per-frame outcome of score fusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedFrame {
    pub bbox: BBox2D,
    pub score: f64,
    /// True when the output box differs from the original top-1 box.
    pub replaced: bool,
}

/// Fuses track confidences into the per-frame selection.
///
/// Each track's fused score is the mean of its entries' original scores;
/// an entry's effective score is `max(original, fused)`. A frame's output
/// flips to a tracked box when that box differs from the original top-1
/// and its effective score exceeds the top-1 score; the emitted record is
/// then the tracked box with its effective score, otherwise the original
/// top-1 record unchanged. With `no_object_threshold` set, frames whose
/// best effective score falls below it output `Absent`.
pub fn fuse_scores(
    tracks: &mut [Track],
    top1: &BTreeMap<u32, (BBox2D, f64)>,
    no_object_threshold: Option<f64>,
) -> BTreeMap<u32, FusedFrame> {
    for track in tracks.iter_mut() {
        if track.entries.is_empty() {
            continue;
        }
        let sum: f64 = track.entries.iter().map(|e| e.score).sum();
        track.fused_score = Some(sum / track.entries.len() as f64);
    }

    let mut out = BTreeMap::new();
    for (&frame, &(top_box, top_score)) in top1 {
        let mut best_effective = top_score;
        let mut challenger: Option<(BBox2D, f64)> = None;
        for track in tracks.iter() {
            let Some(entry) = track.entry_at(frame) else {
                continue;
            };
            let effective = entry.score.max(track.fused_score.unwrap_or(entry.score));
            best_effective = best_effective.max(effective);
            if entry.bbox != top_box && effective > top_score {
                let better = match challenger {
                    Some((_, s)) => effective > s,
                    None => true,
                };
                if better {
                    challenger = Some((entry.bbox, effective));
                }
            }
        }

        let fused = match challenger {
            Some((bbox, score)) => FusedFrame {
                bbox,
                score,
                replaced: true,
            },
            None => FusedFrame {
                bbox: top_box,
                score: top_score,
                replaced: false,
            },
        };
        let fused = match no_object_threshold {
            Some(t) if best_effective < t => FusedFrame {
                bbox: BBox2D::Absent,
                score: best_effective,
                replaced: true,
            },
            _ => fused,
        };
        out.insert(frame, fused);
    }
    out
}

/// Convenience for callers holding raw per-frame detections: the top-1
/// selection is the highest-scored detection of each frame, ties broken
/// by input order.
pub fn top1_by_frame(detections: &[Detection]) -> BTreeMap<u32, (BBox2D, f64)> {
    let mut out: BTreeMap<u32, (BBox2D, f64)> = BTreeMap::new();
    for det in detections {
        if det.bbox.is_absent() {
            continue;
        }
        match out.get(&det.frame_index) {
            Some(&(_, best)) if best >= det.score => {}
            _ => {
                out.insert(det.frame_index, (det.bbox, det.score));
            }
        }
    }
    out
}
