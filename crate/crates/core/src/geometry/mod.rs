//! Box algebra and camera geometry shared by metrics, tracking and
//! triangulation.

mod bbox;
mod camera;

pub use bbox::{giou, iou, nms, BBox2D};
pub use camera::{
    pixel_to_ray, project_point, CameraIntrinsics, CameraModel, CameraPose, Projected, Ray3,
    MIN_PROJECTION_DEPTH,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("box corners ({x1}, {y1})..({x2}, {y2}) are not ordered or not finite")]
    InvalidCorners { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("IoU of two absent boxes is undefined; use iou_plus_n")]
    BothAbsent,
    #[error("operation requires present boxes")]
    AbsentInput,
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("undistortion diverged for radius {rd} with k = {k}")]
    DivergentUndistortion { rd: f64, k: f64 },
}
