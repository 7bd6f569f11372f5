//! JSON schemas for annotations, predictions, tracks, diagnostics and
//! reports, with schema validation that reports JSON-pointer locations.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::IoError;
use crate::geometry::BBox2D;
use crate::metrics::{Aggregation, ClipEvaluation, FrameRecord, SplitReport};
use crate::tracking::Detection;
use crate::triangulation::CornerDiagnostics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Uniqueness {
    Single,
    Multiple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Movement {
    Static,
    Moving,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipTags {
    pub uniqueness: Uniqueness,
    pub movement: Movement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationFrame {
    pub frame_index: u32,
    /// [x1, y1, x2, y2], or null when the frame has no target.
    pub gt_box: Option<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationClip {
    pub clip_id: String,
    pub expression: String,
    pub fps_annotated: f64,
    pub frames: Vec<AnnotationFrame>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<ClipTags>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationFile {
    pub clips: Vec<AnnotationClip>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoredBox {
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionFrame {
    pub frame_index: u32,
    /// Zero boxes mean an absent prediction for the frame.
    pub boxes: Vec<ScoredBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionClip {
    pub clip_id: String,
    pub frames: Vec<PredictionFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionFile {
    pub clips: Vec<PredictionClip>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackEntryRecord {
    pub frame_index: u32,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackRecord {
    pub track_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fused_score: Option<f64>,
    pub entries: Vec<TrackEntryRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackClip {
    pub clip_id: String,
    pub tracks: Vec<TrackRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackFile {
    pub clips: Vec<TrackClip>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipDiagnostics {
    pub clip_id: String,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub corners: Vec<CornerDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsFile {
    pub clips: Vec<ClipDiagnostics>,
}

/// Explicit frame-map override: image file name to annotation frame index.
pub type FrameMap = BTreeMap<String, u32>;

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for segment in path.iter() {
        match segment {
            Segment::Seq { index } => {
                let _ = write!(out, "/{index}");
            }
            Segment::Map { key } => {
                let _ = write!(out, "/{key}");
            }
            Segment::Enum { variant } => {
                let _ = write!(out, "/{variant}");
            }
            Segment::Unknown => out.push_str("/?"),
        }
    }
    out
}

/// Strict JSON deserialization; errors carry the JSON-pointer path of the
/// offending value.
pub fn from_json_str<T: DeserializeOwned>(text: &str) -> Result<T, IoError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| IoError::SchemaViolation {
        pointer: json_pointer(e.path()),
        message: e.inner().to_string(),
    })
}

/// Canonical JSON serialization: pretty-printed, struct field order,
/// trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("serializable value");
    out.push('\n');
    out
}

fn violation(pointer: String, message: impl Into<String>) -> IoError {
    IoError::SchemaViolation {
        pointer,
        message: message.into(),
    }
}

/// Validates a box array from a file. Rejects unordered, non-finite and
/// zero-area boxes: absence has exactly one spelling (null / no boxes).
fn box_from_array(arr: [f64; 4], pointer: &str) -> Result<BBox2D, IoError> {
    let b = BBox2D::new(arr[0], arr[1], arr[2], arr[3])
        .map_err(|e| violation(pointer.to_string(), e.to_string()))?;
    if b.is_absent() {
        return Err(violation(
            pointer.to_string(),
            "zero-area box; encode an absent target as null or zero boxes",
        ));
    }
    Ok(b)
}

fn validate_annotations(file: &AnnotationFile) -> Result<(), IoError> {
    let mut ids = HashSet::new();
    for (ci, clip) in file.clips.iter().enumerate() {
        if !ids.insert(&clip.clip_id) {
            return Err(violation(
                format!("/clips/{ci}/clip_id"),
                format!("duplicate clip id {:?}", clip.clip_id),
            ));
        }
        if clip.frames.is_empty() {
            return Err(violation(
                format!("/clips/{ci}/frames"),
                "clip has no frames",
            ));
        }
        let mut prev: Option<u32> = None;
        for (fi, frame) in clip.frames.iter().enumerate() {
            if let Some(p) = prev {
                if frame.frame_index <= p {
                    return Err(violation(
                        format!("/clips/{ci}/frames/{fi}/frame_index"),
                        format!(
                            "frame indices must be strictly increasing ({p} then {})",
                            frame.frame_index
                        ),
                    ));
                }
            }
            prev = Some(frame.frame_index);
            if let Some(arr) = frame.gt_box {
                box_from_array(arr, &format!("/clips/{ci}/frames/{fi}/gt_box"))?;
            }
        }
    }
    Ok(())
}

fn validate_predictions(file: &PredictionFile) -> Result<(), IoError> {
    let mut ids = HashSet::new();
    for (ci, clip) in file.clips.iter().enumerate() {
        if !ids.insert(&clip.clip_id) {
            return Err(violation(
                format!("/clips/{ci}/clip_id"),
                format!("duplicate clip id {:?}", clip.clip_id),
            ));
        }
        let mut prev: Option<u32> = None;
        for (fi, frame) in clip.frames.iter().enumerate() {
            if let Some(p) = prev {
                if frame.frame_index <= p {
                    return Err(violation(
                        format!("/clips/{ci}/frames/{fi}/frame_index"),
                        format!(
                            "frame indices must be strictly increasing ({p} then {})",
                            frame.frame_index
                        ),
                    ));
                }
            }
            prev = Some(frame.frame_index);
            for (bi, sb) in frame.boxes.iter().enumerate() {
                let ptr = format!("/clips/{ci}/frames/{fi}/boxes/{bi}");
                box_from_array(sb.bbox, &format!("{ptr}/box"))?;
                if !sb.score.is_finite() {
                    return Err(violation(format!("{ptr}/score"), "score must be finite"));
                }
            }
        }
    }
    Ok(())
}

pub fn parse_annotations(text: &str) -> Result<AnnotationFile, IoError> {
    let file: AnnotationFile = from_json_str(text)?;
    validate_annotations(&file)?;
    Ok(file)
}

pub fn parse_predictions(text: &str) -> Result<PredictionFile, IoError> {
    let file: PredictionFile = from_json_str(text)?;
    validate_predictions(&file)?;
    Ok(file)
}

fn read(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|e| IoError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn write(path: &Path, contents: &str) -> Result<(), IoError> {
    std::fs::write(path, contents).map_err(|e| IoError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_annotations(path: &Path) -> Result<AnnotationFile, IoError> {
    parse_annotations(&read(path)?)
}

pub fn load_predictions(path: &Path) -> Result<PredictionFile, IoError> {
    parse_predictions(&read(path)?)
}

pub fn load_frame_map(path: &Path) -> Result<FrameMap, IoError> {
    from_json_str(&read(path)?)
}

pub fn write_annotations(path: &Path, file: &AnnotationFile) -> Result<(), IoError> {
    write(path, &to_json_string(file))
}

pub fn write_predictions(path: &Path, file: &PredictionFile) -> Result<(), IoError> {
    write(path, &to_json_string(file))
}

pub fn write_tracks(path: &Path, file: &TrackFile) -> Result<(), IoError> {
    write(path, &to_json_string(file))
}

pub fn write_diagnostics(path: &Path, file: &DiagnosticsFile) -> Result<(), IoError> {
    write(path, &to_json_string(file))
}

/// Loads a reconstruction directory holding cameras.txt and images.txt.
pub fn load_reconstruction(dir: &Path) -> Result<super::ColmapReconstruction, IoError> {
    let cameras = super::parse_cameras(&read(&dir.join("cameras.txt"))?)?;
    let images = super::parse_images(&read(&dir.join("images.txt"))?)?;
    super::ColmapReconstruction::new(cameras, images)
}

fn fmt_metric(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.6}"),
        None => "null".to_string(),
    }
}

/// Canonical report serialization: alphabetically sorted keys, metric
/// fields fixed to six decimals so reports diff cleanly.
pub fn report_to_json(report: &SplitReport) -> String {
    let aggregation = match report.aggregation {
        Aggregation::ClipAveraged => "clip_averaged",
        Aggregation::PooledImages => "pooled_images",
    };
    let mut out = String::from("{\n");
    let _ = writeln!(out, "  \"aggregation\": \"{aggregation}\",");
    let _ = writeln!(out, "  \"m_ap50\": {},", fmt_metric(report.m_ap50));
    let _ = writeln!(
        out,
        "  \"m_ap50_plus_n\": {},",
        fmt_metric(Some(report.m_ap50_plus_n))
    );
    let _ = writeln!(out, "  \"m_iou\": {},", fmt_metric(report.m_iou));
    let _ = writeln!(
        out,
        "  \"m_iou_plus_n\": {},",
        fmt_metric(Some(report.m_iou_plus_n))
    );
    let _ = writeln!(out, "  \"m_stiou\": {},", fmt_metric(Some(report.m_stiou)));
    let _ = writeln!(out, "  \"n_clips\": {},", report.n_clips);
    let _ = writeln!(out, "  \"n_images\": {},", report.n_images);
    let _ = writeln!(
        out,
        "  \"n_images_with_target\": {},",
        report.n_images_with_target
    );
    let _ = writeln!(
        out,
        "  \"n_vacuous_stiou_clips\": {}",
        report.n_vacuous_stiou_clips
    );
    out.push_str("}\n");
    out
}

pub fn write_report(path: &Path, report: &SplitReport) -> Result<(), IoError> {
    write(path, &report_to_json(report))
}

pub fn parse_report(text: &str) -> Result<SplitReport, IoError> {
    from_json_str(text)
}

/// Converts an annotation frame box to the domain representation.
pub fn gt_box(frame: &AnnotationFrame) -> BBox2D {
    match frame.gt_box {
        // validated at load time, so the unwrap cannot fire for loaded files
        Some([x1, y1, x2, y2]) => BBox2D::new(x1, y1, x2, y2).unwrap_or(BBox2D::Absent),
        None => BBox2D::Absent,
    }
}

/// Flattens a prediction clip into the tracker's detection stream.
pub fn detections_of_clip(clip: &PredictionClip) -> Vec<Detection> {
    clip.frames
        .iter()
        .flat_map(|f| {
            f.boxes.iter().filter_map(move |sb| {
                let bbox = BBox2D::new(sb.bbox[0], sb.bbox[1], sb.bbox[2], sb.bbox[3]).ok()?;
                Some(Detection {
                    frame_index: f.frame_index,
                    bbox,
                    score: sb.score,
                })
            })
        })
        .collect()
}

/// The highest-scored box of a prediction frame, ties broken by input
/// order. `(Absent, None)` for frames with zero boxes.
pub fn top1_of_frame(frame: &PredictionFrame) -> (BBox2D, Option<f64>) {
    let mut best: Option<&ScoredBox> = None;
    for sb in &frame.boxes {
        if best.is_none_or(|b| sb.score > b.score) {
            best = Some(sb);
        }
    }
    match best {
        Some(sb) => (
            BBox2D::new(sb.bbox[0], sb.bbox[1], sb.bbox[2], sb.bbox[3]).unwrap_or(BBox2D::Absent),
            Some(sb.score),
        ),
        None => (BBox2D::Absent, None),
    }
}

/// Pairs annotations with predictions into per-clip evaluations.
///
/// Prediction clip ids must be a subset of the annotation clip ids.
/// Annotation clips without predictions evaluate against all-absent
/// predictions; their ids are returned separately so callers can warn.
/// Prediction frames outside the annotated frame set are ignored: the
/// annotation defines the evaluated set N.
pub fn pair_clips(
    annotations: &AnnotationFile,
    predictions: &PredictionFile,
) -> Result<(Vec<ClipEvaluation>, Vec<String>), IoError> {
    let known: HashSet<&str> = annotations
        .clips
        .iter()
        .map(|c| c.clip_id.as_str())
        .collect();
    let unknown: Vec<String> = predictions
        .clips
        .iter()
        .map(|c| c.clip_id.clone())
        .filter(|id| !known.contains(id.as_str()))
        .collect();
    if !unknown.is_empty() {
        return Err(IoError::UnknownClips(unknown));
    }

    let by_id: BTreeMap<&str, &PredictionClip> = predictions
        .clips
        .iter()
        .map(|c| (c.clip_id.as_str(), c))
        .collect();

    let mut evaluations = Vec::new();
    let mut unpredicted = Vec::new();
    for ann_clip in &annotations.clips {
        let pred_clip = by_id.get(ann_clip.clip_id.as_str());
        if pred_clip.is_none() {
            unpredicted.push(ann_clip.clip_id.clone());
        }
        let pred_frames: BTreeMap<u32, &PredictionFrame> = pred_clip
            .map(|c| c.frames.iter().map(|f| (f.frame_index, f)).collect())
            .unwrap_or_default();

        let frames: Vec<FrameRecord> = ann_clip
            .frames
            .iter()
            .map(|af| {
                let (pred, pred_score) = pred_frames
                    .get(&af.frame_index)
                    .map(|pf| top1_of_frame(pf))
                    .unwrap_or((BBox2D::Absent, None));
                FrameRecord {
                    frame_index: af.frame_index,
                    gt: gt_box(af),
                    pred,
                    pred_score,
                }
            })
            .collect();
        let eval = ClipEvaluation::new(ann_clip.clip_id.clone(), frames)
            .map_err(|e| violation(format!("/clips/{}", ann_clip.clip_id), e.to_string()))?;
        evaluations.push(eval);
    }
    Ok((evaluations, unpredicted))
}
