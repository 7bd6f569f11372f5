//! Clip- and split-level evaluation: IoU over target frames, IoU+n over
//! all frames, AP@50 variants, spatio-temporal IoU and ROC/AUC analysis.

mod roc;

pub use roc::{collect_roc_samples, roc_curve, RocCurve};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, BBox2D};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("clip {clip_id}: duplicate frame index {frame_index}")]
    DuplicateFrame { clip_id: String, frame_index: u32 },
    #[error("clip {0} has no frames")]
    EmptyClip(String),
    #[error("cannot aggregate an empty split")]
    EmptySplit,
    #[error("ROC needs at least one positive and one negative sample")]
    DegenerateLabels,
}

/// One evaluated frame: annotation, prediction and optional confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_index: u32,
    pub gt: BBox2D,
    pub pred: BBox2D,
    pub pred_score: Option<f64>,
}

/// Paired prediction/annotation sequences for one video clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipEvaluation {
    pub clip_id: String,
    frames: Vec<FrameRecord>,
}

impl ClipEvaluation {
    pub fn new(clip_id: impl Into<String>, frames: Vec<FrameRecord>) -> Result<Self, MetricsError> {
        let clip_id = clip_id.into();
        if frames.is_empty() {
            return Err(MetricsError::EmptyClip(clip_id));
        }
        let mut seen = std::collections::HashSet::new();
        for fr in &frames {
            if !seen.insert(fr.frame_index) {
                return Err(MetricsError::DuplicateFrame {
                    clip_id,
                    frame_index: fr.frame_index,
                });
            }
        }
        Ok(Self { clip_id, frames })
    }

    pub fn frames(&self) -> &[FrameRecord] {
        &self.frames
    }

    /// Number of frames whose annotation contains the target (the set M).
    pub fn target_frame_count(&self) -> usize {
        self.frames.iter().filter(|f| f.gt.is_present()).count()
    }

    /// Dataset clips carry at least four annotated target frames; synthetic
    /// clips are unconstrained, so this is advisory rather than enforced.
    pub fn has_dataset_minimum_targets(&self) -> bool {
        self.target_frame_count() >= 4
    }
}

/// IoU extended to frames without the target: 1 when both boxes are
/// absent, otherwise plain IoU (0 when exactly one side is absent).
/// Total over all inputs.
pub fn iou_plus_n(p: &BBox2D, t: &BBox2D) -> f64 {
    iou(p, t).unwrap_or(1.0)
}

/// Spatio-temporal IoU of a clip: summed per-frame intersection areas
/// over summed union areas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stiou {
    pub value: f64,
    /// Set when every frame was both-absent (zero total union). The value
    /// is then reported as 1.0 — a vacuously perfect prediction — and the
    /// flag lets aggregation audit such clips.
    pub vacuous: bool,
}

pub fn stiou(clip: &ClipEvaluation) -> Stiou {
    let mut inter = 0.0;
    let mut union = 0.0;
    for fr in clip.frames() {
        inter += fr.pred.intersection_area(&fr.gt);
        union += fr.pred.union_area(&fr.gt);
    }
    if union == 0.0 {
        Stiou {
            value: 1.0,
            vacuous: true,
        }
    } else {
        Stiou {
            value: inter / union,
            vacuous: false,
        }
    }
}

/// Per-clip metric sums. Per-frame sums and hit counts are kept so both
/// clip-averaged and image-pooled aggregations can be derived later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipMetrics {
    pub clip_id: String,
    pub stiou: f64,
    pub stiou_vacuous: bool,
    /// |N|: number of evaluated frames.
    pub n_frames: usize,
    /// |M|: frames with an annotated target.
    pub n_target_frames: usize,
    pub sum_iou_targets: f64,
    pub hits_targets: usize,
    pub sum_iou_plus_n: f64,
    pub hits_plus_n: usize,
}

impl ClipMetrics {
    /// Mean IoU over target frames; missing (not zero) when |M| = 0.
    pub fn mean_iou(&self) -> Option<f64> {
        (self.n_target_frames > 0).then(|| self.sum_iou_targets / self.n_target_frames as f64)
    }

    /// Fraction of target frames with IoU strictly above 0.5.
    pub fn ap50(&self) -> Option<f64> {
        (self.n_target_frames > 0).then(|| self.hits_targets as f64 / self.n_target_frames as f64)
    }

    pub fn mean_iou_plus_n(&self) -> f64 {
        self.sum_iou_plus_n / self.n_frames as f64
    }

    pub fn ap50_plus_n(&self) -> f64 {
        self.hits_plus_n as f64 / self.n_frames as f64
    }
}

/// Computes all per-clip quantities in one pass.
pub fn clip_metrics(clip: &ClipEvaluation) -> ClipMetrics {
    let st = stiou(clip);
    let mut m = ClipMetrics {
        clip_id: clip.clip_id.clone(),
        stiou: st.value,
        stiou_vacuous: st.vacuous,
        n_frames: clip.frames().len(),
        n_target_frames: 0,
        sum_iou_targets: 0.0,
        hits_targets: 0,
        sum_iou_plus_n: 0.0,
        hits_plus_n: 0,
    };
    for fr in clip.frames() {
        let v = iou_plus_n(&fr.pred, &fr.gt);
        m.sum_iou_plus_n += v;
        if v > 0.5 {
            m.hits_plus_n += 1;
        }
        if fr.gt.is_present() {
            m.n_target_frames += 1;
            // gt present, so iou_plus_n coincides with plain IoU
            m.sum_iou_targets += v;
            if v > 0.5 {
                m.hits_targets += 1;
            }
        }
    }
    m
}

/// How per-image metrics are folded into a split figure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean per image within each clip, then mean over clips (default;
    /// parallels the clip-wise mSTIoU).
    ClipAveraged,
    /// Single mean over all images of the split.
    PooledImages,
}

/// Aggregated figures over one dataset split. All metric fields are in
/// [0, 1]; reports print them x100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub m_stiou: f64,
    /// Missing when no clip in the split has a target frame.
    pub m_iou: Option<f64>,
    pub m_ap50: Option<f64>,
    pub m_iou_plus_n: f64,
    pub m_ap50_plus_n: f64,
    pub n_clips: usize,
    pub n_images: usize,
    pub n_images_with_target: usize,
    /// Clips whose STIoU was vacuous (all frames both-absent).
    pub n_vacuous_stiou_clips: usize,
    pub aggregation: Aggregation,
}

/// Folds per-clip records into a split report. Clips without target
/// frames are excluded from the mIoU/mAP@50 denominators.
pub fn split_aggregate(
    clips: &[ClipMetrics],
    aggregation: Aggregation,
) -> Result<SplitReport, MetricsError> {
    if clips.is_empty() {
        return Err(MetricsError::EmptySplit);
    }
    let n_clips = clips.len();
    let m_stiou = clips.iter().map(|c| c.stiou).sum::<f64>() / n_clips as f64;
    let n_images: usize = clips.iter().map(|c| c.n_frames).sum();
    let n_images_with_target: usize = clips.iter().map(|c| c.n_target_frames).sum();
    let n_vacuous = clips.iter().filter(|c| c.stiou_vacuous).count();

    let (m_iou, m_ap50, m_iou_plus_n, m_ap50_plus_n) = match aggregation {
        Aggregation::ClipAveraged => {
            let with_targets: Vec<&ClipMetrics> =
                clips.iter().filter(|c| c.n_target_frames > 0).collect();
            let mean_over = |f: &dyn Fn(&ClipMetrics) -> f64| {
                (!with_targets.is_empty()).then(|| {
                    with_targets.iter().map(|c| f(c)).sum::<f64>() / with_targets.len() as f64
                })
            };
            (
                mean_over(&|c| c.mean_iou().unwrap()),
                mean_over(&|c| c.ap50().unwrap()),
                clips.iter().map(|c| c.mean_iou_plus_n()).sum::<f64>() / n_clips as f64,
                clips.iter().map(|c| c.ap50_plus_n()).sum::<f64>() / n_clips as f64,
            )
        }
        Aggregation::PooledImages => {
            let sum_iou: f64 = clips.iter().map(|c| c.sum_iou_targets).sum();
            let hits: usize = clips.iter().map(|c| c.hits_targets).sum();
            let sum_plus_n: f64 = clips.iter().map(|c| c.sum_iou_plus_n).sum();
            let hits_plus_n: usize = clips.iter().map(|c| c.hits_plus_n).sum();
            (
                (n_images_with_target > 0).then(|| sum_iou / n_images_with_target as f64),
                (n_images_with_target > 0).then(|| hits as f64 / n_images_with_target as f64),
                sum_plus_n / n_images as f64,
                hits_plus_n as f64 / n_images as f64,
            )
        }
    };

    Ok(SplitReport {
        m_stiou,
        m_iou,
        m_ap50,
        m_iou_plus_n,
        m_ap50_plus_n,
        n_clips,
        n_images,
        n_images_with_target,
        n_vacuous_stiou_clips: n_vacuous,
        aggregation,
    })
}
