//! ROC analysis of no-referred-object discrimination from box confidences.

use serde::{Deserialize, Serialize};

use super::{ClipEvaluation, MetricsError};

/// An ROC curve swept over the distinct confidence values, with its area.
///
/// Points run from (0, 0) to (1, 1) as the threshold descends; tied
/// scores advance both rates at once, so the trapezoidal area equals the
/// Mann-Whitney statistic with half credit for ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// (false positive rate, true positive rate), threshold descending.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Builds the ROC curve for `(confidence, has_target)` samples, treating
/// frames that contain the referred object as positives.
pub fn roc_curve(samples: &[(f64, bool)]) -> Result<RocCurve, MetricsError> {
    let n_pos = samples.iter().filter(|(_, t)| *t).count();
    let n_neg = samples.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::DegenerateLabels);
    }

    let mut sorted: Vec<(f64, bool)> = samples.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));

    let mut points = vec![(0.0, 0.0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].0;
        // consume the whole tie group before emitting a point
        while i < sorted.len() && sorted[i].0 == score {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }

    let mut auc = 0.0;
    for pair in points.windows(2) {
        let (x1, y1) = pair[0];
        let (x2, y2) = pair[1];
        auc += (x2 - x1) * (y1 + y2) / 2.0;
    }
    Ok(RocCurve { points, auc })
}

/// Extracts `(confidence, has_target)` samples from evaluated clips.
/// A frame whose prediction carries no score counts as least confident.
pub fn collect_roc_samples(clips: &[ClipEvaluation]) -> Vec<(f64, bool)> {
    clips
        .iter()
        .flat_map(|c| c.frames())
        .map(|fr| (fr.pred_score.unwrap_or(0.0), fr.gt.is_present()))
        .collect()
}
