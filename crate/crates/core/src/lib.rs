//! Evaluation and refinement toolkit for video referring-expression
//! predictions: spatio-temporal IoU metrics, ROC analysis of
//! no-referred-object discrimination, tracking-by-detection score fusion,
//! and a multi-view box-corner triangulation baseline, together with the
//! file formats and synthetic scenes needed to validate them.

pub mod geometry;
pub mod io;
pub mod metrics;
pub mod synth;
pub mod tracking;
pub mod triangulation;

pub use geometry::{giou, iou, nms, BBox2D, CameraIntrinsics, CameraPose, Projected, Ray3};
pub use metrics::{
    clip_metrics, iou_plus_n, roc_curve, split_aggregate, stiou, Aggregation, ClipEvaluation,
    ClipMetrics, FrameRecord, RocCurve, SplitReport,
};
pub use tracking::{fuse_scores, run_tracker, Detection, Track, TrackerConfig};
pub use triangulation::{
    converge_point, refine_clip, reproject_box, triangulate_box, CalibratedFrame, ReplaceMode,
    TriangulationConfig,
};
