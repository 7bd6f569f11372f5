//! File formats: COLMAP text reconstructions and the JSON schemas for
//! annotations, predictions, tracks, diagnostics and reports.
//!
//! Parsers are strict: every error carries a location (line number or
//! JSON pointer) and nothing is silently coerced.

mod colmap;
mod files;

pub use colmap::{
    frame_index_from_name, parse_cameras, parse_images, serialize_cameras, serialize_images,
    ColmapImage, ColmapReconstruction,
};
pub use files::{
    detections_of_clip, from_json_str, gt_box, load_annotations, load_frame_map, load_predictions,
    load_reconstruction, pair_clips, parse_annotations, parse_predictions, parse_report,
    report_to_json, to_json_string, top1_of_frame, write_annotations, write_diagnostics,
    write_predictions, write_report, write_tracks, AnnotationClip, AnnotationFile, AnnotationFrame,
    ClipDiagnostics, ClipTags, DiagnosticsFile, FrameMap, Movement, PredictionClip, PredictionFile,
    PredictionFrame, ScoredBox, TrackClip, TrackEntryRecord, TrackFile, TrackRecord, Uniqueness,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IoError {
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: unsupported camera model {model}")]
    UnsupportedModel { line: usize, model: String },
    #[error("line {line}: quaternion norm {norm} is too far from 1")]
    MalformedPose { line: usize, norm: f64 },
    #[error("image {image_id} references unknown camera {camera_id}")]
    UnknownCamera { image_id: u32, camera_id: u32 },
    #[error("frame index {frame_index} claimed by both {name_a:?} and {name_b:?}")]
    DuplicateFrameIndex {
        frame_index: u32,
        name_a: String,
        name_b: String,
    },
    #[error("{pointer}: {message}")]
    SchemaViolation { pointer: String, message: String },
    #[error("predictions reference unknown clips: {0:?}")]
    UnknownClips(Vec<String>),
}
