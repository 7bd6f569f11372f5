//! Rasterization-based metric oracle: boxes are snapped to a sub-pixel
//! integer grid and areas are counted cell by cell, giving an exact
//! independent route to every metric on grid-aligned boxes.

use crate::geometry::BBox2D;
use crate::metrics::{
    Aggregation, ClipEvaluation, ClipMetrics, FrameRecord, MetricsError, SplitReport,
};

/// Snaps box corners to the 1/res pixel grid (round to nearest). A box
/// that collapses becomes absent.
pub fn quantize_box(b: &BBox2D, res: u32) -> BBox2D {
    match b.corners() {
        None => BBox2D::Absent,
        Some([x1, y1, x2, y2]) => {
            let s = res as f64;
            let snap = |v: f64| (v * s).round() / s;
            BBox2D::new(snap(x1), snap(y1), snap(x2), snap(y2)).unwrap_or(BBox2D::Absent)
        }
    }
}

pub fn quantize_clip(clip: &ClipEvaluation, res: u32) -> ClipEvaluation {
    let frames: Vec<FrameRecord> = clip
        .frames()
        .iter()
        .map(|fr| FrameRecord {
            frame_index: fr.frame_index,
            gt: quantize_box(&fr.gt, res),
            pred: quantize_box(&fr.pred, res),
            pred_score: fr.pred_score,
        })
        .collect();
    ClipEvaluation::new(clip.clip_id.clone(), frames).expect("quantization preserves structure")
}

pub fn quantize_clips(clips: &[ClipEvaluation], res: u32) -> Vec<ClipEvaluation> {
    clips.iter().map(|c| quantize_clip(c, res)).collect()
}

struct CellCounts {
    inter: u64,
    union: u64,
}

/// Counts grid cells inside the intersection and union of two boxes by
/// enumerating every cell of their joint hull.
fn count_cells(p: &BBox2D, t: &BBox2D, res: u32) -> CellCounts {
    let s = res as f64;
    let grid = |b: &BBox2D| -> Option<[i64; 4]> {
        b.corners().map(|[x1, y1, x2, y2]| {
            [
                (x1 * s).round() as i64,
                (y1 * s).round() as i64,
                (x2 * s).round() as i64,
                (y2 * s).round() as i64,
            ]
        })
    };
    let gp = grid(p);
    let gt = grid(t);
    let mut counts = CellCounts { inter: 0, union: 0 };
    let hull = match (gp, gt) {
        (None, None) => return counts,
        (Some(a), None) | (None, Some(a)) => a,
        (Some(a), Some(b)) => [
            a[0].min(b[0]),
            a[1].min(b[1]),
            a[2].max(b[2]),
            a[3].max(b[3]),
        ],
    };
    let inside = |g: &Option<[i64; 4]>, x: i64, y: i64| -> bool {
        matches!(g, Some([x1, y1, x2, y2]) if x >= *x1 && x < *x2 && y >= *y1 && y < *y2)
    };
    for x in hull[0]..hull[2] {
        for y in hull[1]..hull[3] {
            let in_p = inside(&gp, x, y);
            let in_t = inside(&gt, x, y);
            if in_p && in_t {
                counts.inter += 1;
            }
            if in_p || in_t {
                counts.union += 1;
            }
        }
    }
    counts
}

/// Per-clip metrics computed entirely by cell counting. Input boxes are
/// snapped to the grid first, so run the analytic side on
/// `quantize_clip(clip, res)` for an exact comparison.
pub fn oracle_clip_metrics(clip: &ClipEvaluation, res: u32) -> ClipMetrics {
    let clip = quantize_clip(clip, res);
    let mut inter_total = 0u64;
    let mut union_total = 0u64;
    let mut m = ClipMetrics {
        clip_id: clip.clip_id.clone(),
        stiou: 0.0,
        stiou_vacuous: false,
        n_frames: clip.frames().len(),
        n_target_frames: 0,
        sum_iou_targets: 0.0,
        hits_targets: 0,
        sum_iou_plus_n: 0.0,
        hits_plus_n: 0,
    };
    for fr in clip.frames() {
        let counts = count_cells(&fr.pred, &fr.gt, res);
        inter_total += counts.inter;
        union_total += counts.union;
        let (value, hit) = if counts.union == 0 {
            (1.0, true) // both absent: vacuously perfect frame
        } else {
            (
                counts.inter as f64 / counts.union as f64,
                2 * counts.inter > counts.union,
            )
        };
        m.sum_iou_plus_n += value;
        if hit {
            m.hits_plus_n += 1;
        }
        if fr.gt.is_present() {
            m.n_target_frames += 1;
            m.sum_iou_targets += value;
            if hit {
                m.hits_targets += 1;
            }
        }
    }
    if union_total == 0 {
        m.stiou = 1.0;
        m.stiou_vacuous = true;
    } else {
        m.stiou = inter_total as f64 / union_total as f64;
    }
    m
}

/// Split-level report from the counting oracle. The aggregation
/// arithmetic is restated here independently of the metrics module.
pub fn oracle_split_report(
    clips: &[ClipEvaluation],
    res: u32,
    aggregation: Aggregation,
) -> Result<SplitReport, MetricsError> {
    if clips.is_empty() {
        return Err(MetricsError::EmptySplit);
    }
    let records: Vec<ClipMetrics> = clips.iter().map(|c| oracle_clip_metrics(c, res)).collect();

    let n_clips = records.len();
    let mut stiou_sum = 0.0;
    let mut n_images = 0usize;
    let mut n_with_target = 0usize;
    let mut n_vacuous = 0usize;
    for r in &records {
        stiou_sum += r.stiou;
        n_images += r.n_frames;
        n_with_target += r.n_target_frames;
        if r.stiou_vacuous {
            n_vacuous += 1;
        }
    }

    let (m_iou, m_ap50, m_iou_plus_n, m_ap50_plus_n) = match aggregation {
        Aggregation::ClipAveraged => {
            let mut iou_sum = 0.0;
            let mut ap_sum = 0.0;
            let mut with_targets = 0usize;
            let mut plus_sum = 0.0;
            let mut plus_ap_sum = 0.0;
            for r in &records {
                if r.n_target_frames > 0 {
                    with_targets += 1;
                    iou_sum += r.sum_iou_targets / r.n_target_frames as f64;
                    ap_sum += r.hits_targets as f64 / r.n_target_frames as f64;
                }
                plus_sum += r.sum_iou_plus_n / r.n_frames as f64;
                plus_ap_sum += r.hits_plus_n as f64 / r.n_frames as f64;
            }
            (
                (with_targets > 0).then(|| iou_sum / with_targets as f64),
                (with_targets > 0).then(|| ap_sum / with_targets as f64),
                plus_sum / n_clips as f64,
                plus_ap_sum / n_clips as f64,
            )
        }
        Aggregation::PooledImages => {
            let iou_sum: f64 = records.iter().map(|r| r.sum_iou_targets).sum();
            let hits: usize = records.iter().map(|r| r.hits_targets).sum();
            let plus_sum: f64 = records.iter().map(|r| r.sum_iou_plus_n).sum();
            let plus_hits: usize = records.iter().map(|r| r.hits_plus_n).sum();
            (
                (n_with_target > 0).then(|| iou_sum / n_with_target as f64),
                (n_with_target > 0).then(|| hits as f64 / n_with_target as f64),
                plus_sum / n_images as f64,
                plus_hits as f64 / n_images as f64,
            )
        }
    };

    Ok(SplitReport {
        m_stiou: stiou_sum / n_clips as f64,
        m_iou,
        m_ap50,
        m_iou_plus_n,
        m_ap50_plus_n,
        n_clips,
        n_images,
        n_images_with_target: n_with_target,
        n_vacuous_stiou_clips: n_vacuous,
        aggregation,
    })
}
