//! Multi-view box-corner triangulation: back-project 2D corners to rays,
//! find per-corner convergence points with parallel/outlier rejection,
//! and re-project the 3D corners into every frame.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    pixel_to_ray, project_point, BBox2D, CameraIntrinsics, CameraPose, GeometryError, Ray3,
};

const CONDITION_LIMIT: f64 = 1e10;
/// Floor for the outlier cutoff so that exactly intersecting bundles
/// (zero spread) do not reject everything.
const MAD_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TriangulationError {
    #[error("frame {0} is not registered")]
    UnregisteredFrame(u32),
    #[error("no camera with id {0}")]
    MissingCamera(u32),
    #[error("{available} usable views, need at least {required}")]
    InsufficientViews { available: usize, required: usize },
    #[error("ray bundle is near-parallel (condition number {condition:.3e})")]
    SingularBundle { condition: f64 },
    #[error("{survivors} inlier rays left after filtering, need at least {required}")]
    TooFewInliers { survivors: usize, required: usize },
    #[error("relative residual {relative:.4} exceeds the trust limit {limit:.4}")]
    ExcessiveResidual { relative: f64, limit: f64 },
    #[error("corner {corner}: {source}")]
    CornerFailed {
        corner: &'static str,
        #[source]
        source: Box<TriangulationError>,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid triangulation config: {0}")]
    InvalidConfig(String),
}

/// One frame of a reconstructed clip. Structure-from-motion may fail to
/// register blurred frames; unregistered frames carry no pose.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedFrame {
    pub frame_index: u32,
    pub camera_id: u32,
    pub pose: Option<CameraPose>,
}

impl CalibratedFrame {
    pub fn registered(&self) -> bool {
        self.pose.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corner {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl Corner {
    pub const ALL: [Corner; 4] = [
        Corner::TopLeft,
        Corner::TopRight,
        Corner::BottomLeft,
        Corner::BottomRight,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Corner::TopLeft => "TL",
            Corner::TopRight => "TR",
            Corner::BottomLeft => "BL",
            Corner::BottomRight => "BR",
        }
    }

    pub fn pixel(&self, [x1, y1, x2, y2]: [f64; 4]) -> (f64, f64) {
        match self {
            Corner::TopLeft => (x1, y1),
            Corner::TopRight => (x2, y1),
            Corner::BottomLeft => (x1, y2),
            Corner::BottomRight => (x2, y2),
        }
    }
}

/// Back-projected rays for one corner over the contributing frames.
#[derive(Debug, Clone, PartialEq)]
pub struct CornerBundle {
    pub corner: Corner,
    pub rays: Vec<(u32, Ray3)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplaceMode {
    /// Replace every registered frame's output with the re-projection.
    Always,
    /// Replace only frames where the 2D prediction was absent.
    OnlyAbsent,
    /// Pass predictions through; compute diagnostics only.
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriangulationConfig {
    /// Ray pairs with |cos angle| above this are near-parallel (default cos 2 deg).
    pub parallel_cos_thresh: f64,
    /// Outlier cutoff in units of the median midpoint deviation.
    pub outlier_mad_factor: f64,
    pub min_inlier_rays: usize,
    pub replace_mode: ReplaceMode,
    /// Whole-box failure when the RMS point-to-ray residual exceeds this
    /// fraction of the mean camera-to-point distance.
    pub max_relative_residual: f64,
}

impl Default for TriangulationConfig {
    fn default() -> Self {
        Self {
            parallel_cos_thresh: (2.0f64).to_radians().cos(),
            outlier_mad_factor: 3.0,
            min_inlier_rays: 3,
            replace_mode: ReplaceMode::OnlyAbsent,
            max_relative_residual: 0.05,
        }
    }
}

impl TriangulationConfig {
    pub fn validate(&self) -> Result<(), TriangulationError> {
        if !(0.0 < self.parallel_cos_thresh && self.parallel_cos_thresh < 1.0) {
            return Err(TriangulationError::InvalidConfig(format!(
                "parallel_cos_thresh must be in (0, 1), got {}",
                self.parallel_cos_thresh
            )));
        }
        if self.min_inlier_rays < 2 {
            return Err(TriangulationError::InvalidConfig(
                "min_inlier_rays must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

/// Back-projects the four corners of a present box into world rays.
pub fn corner_rays(
    bbox: &BBox2D,
    frame: &CalibratedFrame,
    intr: &CameraIntrinsics,
) -> Result<[(Corner, Ray3); 4], TriangulationError> {
    let pose = frame
        .pose
        .as_ref()
        .ok_or(TriangulationError::UnregisteredFrame(frame.frame_index))?;
    let corners = bbox.corners().ok_or(GeometryError::AbsentInput)?;
    let mut out = Vec::with_capacity(4);
    for corner in Corner::ALL {
        let (u, v) = corner.pixel(corners);
        out.push((corner, pixel_to_ray(u, v, pose, intr)?));
    }
    Ok([out[0], out[1], out[2], out[3]])
}

/// The least-squares convergence point of a ray bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    pub point: Point3<f64>,
    /// RMS perpendicular distance from the point to the rays.
    pub rms_residual: f64,
}

/// Solves for the point minimizing the summed squared perpendicular
/// distances to the rays, via the normal equations
/// `sum(I - d d^T) p = sum(I - d d^T) o`.
pub fn converge_point(rays: &[Ray3]) -> Result<Convergence, TriangulationError> {
    if rays.len() < 2 {
        return Err(TriangulationError::TooFewInliers {
            survivors: rays.len(),
            required: 2,
        });
    }
    let mut a = Matrix3::<f64>::zeros();
    let mut b = Vector3::<f64>::zeros();
    for ray in rays {
        let d = ray.direction.into_inner();
        let proj = Matrix3::identity() - d * d.transpose();
        a += proj;
        b += proj * ray.origin.coords;
    }

    let eigen = a.symmetric_eigenvalues();
    let max_ev = eigen.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_ev = eigen.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_ev <= 0.0 || max_ev / min_ev > CONDITION_LIMIT {
        return Err(TriangulationError::SingularBundle {
            condition: if min_ev > 0.0 {
                max_ev / min_ev
            } else {
                f64::INFINITY
            },
        });
    }

    let point = Point3::from(a.try_inverse().expect("well-conditioned matrix") * b);
    let sq_sum: f64 = rays.iter().map(|r| r.distance_to(&point).powi(2)).sum();
    Ok(Convergence {
        point,
        rms_residual: (sq_sum / rays.len() as f64).sqrt(),
    })
}

/// Closest-approach midpoint of two non-parallel lines.
fn pair_midpoint(a: &Ray3, b: &Ray3) -> Option<Point3<f64>> {
    let da = a.direction.into_inner();
    let db = b.direction.into_inner();
    let w = a.origin - b.origin;
    let dot = da.dot(&db);
    let denom = 1.0 - dot * dot;
    if denom < 1e-12 {
        return None;
    }
    let s = (dot * db.dot(&w) - da.dot(&w)) / denom;
    let t = (db.dot(&w) - dot * da.dot(&w)) / denom;
    let pa = a.origin + da * s;
    let pb = b.origin + db * t;
    Some(Point3::from((pa.coords + pb.coords) / 2.0))
}

/// Drops near-parallel rays (keeping the earlier frame), then rejects
/// rays whose pairwise closest-approach midpoints all fall far from the
/// consensus: farther than `outlier_mad_factor` times the median midpoint
/// deviation from the component-wise median point.
pub fn filter_rays(
    bundle: &CornerBundle,
    cfg: &TriangulationConfig,
) -> Result<CornerBundle, TriangulationError> {
    let too_few = |survivors: usize| TriangulationError::TooFewInliers {
        survivors,
        required: cfg.min_inlier_rays,
    };
    if bundle.rays.len() < 2 {
        return Err(too_few(bundle.rays.len()));
    }

    // (a) near-parallel rejection, earlier frames win
    let mut kept: Vec<(u32, Ray3)> = Vec::new();
    for &(frame, ray) in &bundle.rays {
        let parallel = kept
            .iter()
            .any(|(_, k)| k.direction.dot(&ray.direction).abs() > cfg.parallel_cos_thresh);
        if !parallel {
            kept.push((frame, ray));
        }
    }
    if kept.len() < cfg.min_inlier_rays.max(2) {
        return Err(too_few(kept.len()));
    }

    // (b) consensus-of-midpoints outlier rejection
    let mut midpoints: Vec<(usize, usize, Point3<f64>)> = Vec::new();
    for i in 0..kept.len() {
        for j in i + 1..kept.len() {
            if let Some(m) = pair_midpoint(&kept[i].1, &kept[j].1) {
                midpoints.push((i, j, m));
            }
        }
    }
    let median_of = |mut vals: Vec<f64>| -> f64 {
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = vals.len();
        if n % 2 == 1 {
            vals[n / 2]
        } else {
            (vals[n / 2 - 1] + vals[n / 2]) / 2.0
        }
    };
    let center = Point3::new(
        median_of(midpoints.iter().map(|(_, _, m)| m.x).collect()),
        median_of(midpoints.iter().map(|(_, _, m)| m.y).collect()),
        median_of(midpoints.iter().map(|(_, _, m)| m.z).collect()),
    );
    let distances: Vec<f64> = midpoints
        .iter()
        .map(|(_, _, m)| (m - center).norm())
        .collect();
    let mad = median_of(distances.clone());
    let cutoff = cfg.outlier_mad_factor * mad.max(MAD_FLOOR);

    let survivors: Vec<(u32, Ray3)> = kept
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            // a ray survives if any of its midpoints is near the consensus
            midpoints
                .iter()
                .zip(&distances)
                .any(|(&(a, b, _), &d)| (a == *i || b == *i) && d <= cutoff)
        })
        .map(|(_, r)| *r)
        .collect();

    if survivors.len() < cfg.min_inlier_rays {
        return Err(too_few(survivors.len()));
    }
    Ok(CornerBundle {
        corner: bundle.corner,
        rays: survivors,
    })
}

/// Per-corner record for the diagnostics sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerDiagnostics {
    pub corner: String,
    pub n_rays: usize,
    pub n_inliers: usize,
    pub rms_residual: Option<f64>,
    pub relative_residual: Option<f64>,
    pub error: Option<String>,
}

/// A solved box: four independent 3D corners (no planarity imposed).
#[derive(Debug, Clone, PartialEq)]
pub struct BoxTriangulation {
    /// TL, TR, BL, BR order.
    pub corners: [Point3<f64>; 4],
    pub inlier_frames: [BTreeSet<u32>; 4],
    pub diagnostics: Vec<CornerDiagnostics>,
}

type SolvedCorners = ([Point3<f64>; 4], [BTreeSet<u32>; 4]);

fn triangulate_corners(
    boxes: &BTreeMap<u32, BBox2D>,
    frames: &[CalibratedFrame],
    cameras: &BTreeMap<u32, CameraIntrinsics>,
    cfg: &TriangulationConfig,
) -> (
    Vec<CornerDiagnostics>,
    Result<SolvedCorners, TriangulationError>,
) {
    let mut diagnostics = Vec::new();
    if let Err(e) = cfg.validate() {
        return (diagnostics, Err(e));
    }

    let mut views: Vec<(&CalibratedFrame, &CameraIntrinsics, [f64; 4])> = Vec::new();
    for frame in frames {
        if !frame.registered() {
            continue;
        }
        let Some(corners) = boxes.get(&frame.frame_index).and_then(|b| b.corners()) else {
            continue;
        };
        let Some(intr) = cameras.get(&frame.camera_id) else {
            return (
                diagnostics,
                Err(TriangulationError::MissingCamera(frame.camera_id)),
            );
        };
        views.push((frame, intr, corners));
    }
    if views.len() < cfg.min_inlier_rays {
        return (
            diagnostics,
            Err(TriangulationError::InsufficientViews {
                available: views.len(),
                required: cfg.min_inlier_rays,
            }),
        );
    }

    let mut points = [Point3::origin(); 4];
    let mut inliers: [BTreeSet<u32>; 4] = Default::default();
    let mut failure: Option<TriangulationError> = None;

    for (ci, corner) in Corner::ALL.into_iter().enumerate() {
        let mut diag = CornerDiagnostics {
            corner: corner.label().to_string(),
            n_rays: 0,
            n_inliers: 0,
            rms_residual: None,
            relative_residual: None,
            error: None,
        };
        let solved = (|| -> Result<(), TriangulationError> {
            let mut rays = Vec::new();
            for (frame, intr, corners) in &views {
                let (u, v) = corner.pixel(*corners);
                let pose = frame.pose.as_ref().expect("registered view");
                rays.push((frame.frame_index, pixel_to_ray(u, v, pose, intr)?));
            }
            diag.n_rays = rays.len();
            let bundle = filter_rays(&CornerBundle { corner, rays }, cfg)?;
            diag.n_inliers = bundle.rays.len();
            let rays: Vec<Ray3> = bundle.rays.iter().map(|(_, r)| *r).collect();
            let conv = converge_point(&rays)?;
            diag.rms_residual = Some(conv.rms_residual);

            let mean_dist = rays
                .iter()
                .map(|r| (conv.point - r.origin).norm())
                .sum::<f64>()
                / rays.len() as f64;
            let relative = if mean_dist > 0.0 {
                conv.rms_residual / mean_dist
            } else {
                f64::INFINITY
            };
            diag.relative_residual = Some(relative);
            if relative > cfg.max_relative_residual {
                return Err(TriangulationError::ExcessiveResidual {
                    relative,
                    limit: cfg.max_relative_residual,
                });
            }

            points[ci] = conv.point;
            inliers[ci] = bundle.rays.iter().map(|(f, _)| *f).collect();
            Ok(())
        })();

        if let Err(e) = solved {
            diag.error = Some(e.to_string());
            if failure.is_none() {
                failure = Some(TriangulationError::CornerFailed {
                    corner: corner.label(),
                    source: Box::new(e),
                });
            }
        }
        diagnostics.push(diag);
    }

    match failure {
        Some(e) => (diagnostics, Err(e)),
        None => (diagnostics, Ok((points, inliers))),
    }
}

/// Triangulates the four corners of a tracked box from its per-frame 2D
/// predictions. Any corner failure fails the whole box.
pub fn triangulate_box(
    boxes: &BTreeMap<u32, BBox2D>,
    frames: &[CalibratedFrame],
    cameras: &BTreeMap<u32, CameraIntrinsics>,
    cfg: &TriangulationConfig,
) -> Result<BoxTriangulation, TriangulationError> {
    let (diagnostics, result) = triangulate_corners(boxes, frames, cameras, cfg);
    let (corners, inlier_frames) = result?;
    Ok(BoxTriangulation {
        corners,
        inlier_frames,
        diagnostics,
    })
}

/// Projects the four corners into a frame and returns the axis-aligned
/// hull clipped to the image. `Absent` encodes failure: an unregistered
/// frame, fewer than two corners in front of the camera, or an empty clip.
pub fn reproject_box(
    corners: &[Point3<f64>; 4],
    frame: &CalibratedFrame,
    intr: &CameraIntrinsics,
) -> BBox2D {
    let Some(pose) = frame.pose.as_ref() else {
        return BBox2D::Absent;
    };
    let pixels: Vec<(f64, f64)> = corners
        .iter()
        .filter_map(|p| project_point(p, pose, intr).pixel())
        .collect();
    if pixels.len() < 2 {
        return BBox2D::Absent;
    }
    let x1 = pixels.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let y1 = pixels.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let x2 = pixels.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let y2 = pixels.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    // clip to the image rectangle
    let cx1 = x1.max(0.0);
    let cy1 = y1.max(0.0);
    let cx2 = x2.min(intr.width as f64);
    let cy2 = y2.min(intr.height as f64);
    if cx1 >= cx2 || cy1 >= cy2 {
        return BBox2D::Absent;
    }
    BBox2D::new(cx1, cy1, cx2, cy2).unwrap_or(BBox2D::Absent)
}

/// A refined clip: per-frame output boxes plus failure state and the
/// per-corner diagnostics for the sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedClip {
    pub frames: BTreeMap<u32, BBox2D>,
    pub failed: bool,
    pub failure: Option<String>,
    pub diagnostics: Vec<CornerDiagnostics>,
}

/// Runs the 3D-projection refinement over one clip's predictions.
///
/// Triangulation failure degrades to passthrough with the failure flag
/// set; unregistered frames always pass through.
pub fn refine_clip(
    predictions: &BTreeMap<u32, BBox2D>,
    frames: &[CalibratedFrame],
    cameras: &BTreeMap<u32, CameraIntrinsics>,
    cfg: &TriangulationConfig,
) -> RefinedClip {
    let (diagnostics, result) = triangulate_corners(predictions, frames, cameras, cfg);
    let corners = match result {
        Ok((corners, _)) => corners,
        Err(e) => {
            return RefinedClip {
                frames: predictions.clone(),
                failed: true,
                failure: Some(e.to_string()),
                diagnostics,
            };
        }
    };

    let by_index: BTreeMap<u32, &CalibratedFrame> =
        frames.iter().map(|f| (f.frame_index, f)).collect();
    let mut out = BTreeMap::new();
    for (&frame_index, &pred) in predictions {
        let replacement = by_index
            .get(&frame_index)
            .filter(|f| f.registered())
            .and_then(|f| cameras.get(&f.camera_id).map(|intr| (f, intr)));
        let chosen = match (cfg.replace_mode, replacement) {
            (ReplaceMode::Never, _) | (_, None) => pred,
            (ReplaceMode::Always, Some((f, intr))) => reproject_box(&corners, f, intr),
            (ReplaceMode::OnlyAbsent, Some((f, intr))) => {
                if pred.is_absent() {
                    reproject_box(&corners, f, intr)
                } else {
                    pred
                }
            }
        };
        out.insert(frame_index, chosen);
    }
    RefinedClip {
        frames: out,
        failed: false,
        failure: None,
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn ray(o: [f64; 3], d: [f64; 3]) -> Ray3 {
        Ray3::new(
            Point3::new(o[0], o[1], o[2]),
            Vector3::new(d[0], d[1], d[2]),
        )
    }

    fn default_cfg() -> TriangulationConfig {
        TriangulationConfig::default()
    }

    #[test]
    fn two_perpendicular_rays_intersect_exactly() {
        let rays = [
            ray([1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]),
            ray([0.0, 1.0, 0.0], [0.0, -1.0, 0.0]),
        ];
        let conv = converge_point(&rays).unwrap();
        assert!(conv.point.coords.norm() < 1e-12);
        assert!(conv.rms_residual < 1e-12);
    }

    #[test]
    fn rays_through_common_point_recover_it() {
        let mut rng = StdRng::seed_from_u64(51);
        let target = Point3::new(1.0, 2.0, 3.0);
        for _ in 0..50 {
            let rays: Vec<Ray3> = (0..5)
                .map(|_| {
                    let o = Point3::new(
                        rng.random_range(-10.0..10.0),
                        rng.random_range(-10.0..10.0),
                        rng.random_range(-10.0..10.0),
                    );
                    Ray3::new(o, target - o)
                })
                .collect();
            let conv = converge_point(&rays).unwrap();
            assert!((conv.point - target).norm() < 1e-9);
            assert!(conv.rms_residual < 1e-9);
        }
    }

    #[test]
    fn parallel_bundle_is_singular() {
        let rays = [
            ray([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
            ray([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
            ray([0.0, 1.0, 0.0], [0.0, 0.0, 1.0]),
        ];
        assert!(matches!(
            converge_point(&rays),
            Err(TriangulationError::SingularBundle { .. })
        ));
    }

    #[test]
    fn residual_zero_iff_common_point() {
        // rays that do not quite meet
        let rays = [
            ray([1.0, 0.0, 0.0], [-1.0, 0.0, 0.1]),
            ray([0.0, 1.0, 0.0], [0.0, -1.0, -0.1]),
        ];
        let conv = converge_point(&rays).unwrap();
        assert!(conv.rms_residual > 1e-3);
    }

    /// Independent check: coordinate descent on the summed squared
    /// point-to-ray distance, with exact parabolic line minimization,
    /// started from the centroid of pairwise midpoints.
    fn coordinate_descent_oracle(rays: &[Ray3]) -> Point3<f64> {
        let objective =
            |p: &Point3<f64>| -> f64 { rays.iter().map(|r| r.distance_to(p).powi(2)).sum() };
        let mut midpoints = Vec::new();
        for i in 0..rays.len() {
            for j in i + 1..rays.len() {
                if let Some(m) = pair_midpoint(&rays[i], &rays[j]) {
                    midpoints.push(m);
                }
            }
        }
        let mut p = Point3::from(
            midpoints.iter().map(|m| m.coords).sum::<Vector3<f64>>() / midpoints.len() as f64,
        );
        for _ in 0..200 {
            let before = objective(&p);
            for axis in 0..3 {
                let h = 0.5;
                let probe = |delta: f64| {
                    let mut q = p;
                    q.coords[axis] += delta;
                    objective(&q)
                };
                let (f_minus, f_zero, f_plus) = (probe(-h), probe(0.0), probe(h));
                let denom = f_plus - 2.0 * f_zero + f_minus;
                if denom.abs() > 1e-30 {
                    p.coords[axis] -= h * (f_plus - f_minus) / (2.0 * denom);
                }
            }
            if (before - objective(&p)).abs() < 1e-16 {
                break;
            }
        }
        p
    }

    #[test]
    fn least_squares_matches_coordinate_descent_oracle() {
        let mut rng = StdRng::seed_from_u64(53);
        for trial in 0..100 {
            let target = Point3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            );
            let rays: Vec<Ray3> = (0..8)
                .map(|_| {
                    let o = Point3::new(
                        rng.random_range(-10.0..10.0),
                        rng.random_range(-10.0..10.0),
                        rng.random_range(-10.0..10.0),
                    );
                    let noise = Vector3::new(
                        rng.random_range(-1e-3..1e-3),
                        rng.random_range(-1e-3..1e-3),
                        rng.random_range(-1e-3..1e-3),
                    );
                    Ray3::new(o, (target - o).normalize() + noise)
                })
                .collect();
            let conv = converge_point(&rays).unwrap();
            let oracle = coordinate_descent_oracle(&rays);
            assert!(
                (conv.point - oracle).norm() < 1e-6,
                "trial {trial}: {:?} vs {:?}",
                conv.point,
                oracle
            );
        }
    }

    #[test]
    fn converge_point_is_rigid_equivariant() {
        let mut rng = StdRng::seed_from_u64(57);
        for _ in 0..50 {
            let rays: Vec<Ray3> = (0..6)
                .map(|_| {
                    let o = Point3::new(
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                    );
                    let d = Vector3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    );
                    Ray3::new(o, d)
                })
                .collect();
            let Ok(base) = converge_point(&rays) else {
                continue;
            };
            let rot = UnitQuaternion::from_scaled_axis(Vector3::new(0.3, -0.5, 0.2));
            let shift = Vector3::new(4.0, -2.0, 1.5);
            let moved: Vec<Ray3> = rays
                .iter()
                .map(|r| {
                    Ray3::new(
                        Point3::from(rot.transform_vector(&r.origin.coords) + shift),
                        rot.transform_vector(&r.direction),
                    )
                })
                .collect();
            let conv = converge_point(&moved).unwrap();
            let expected = Point3::from(rot.transform_vector(&base.point.coords) + shift);
            assert!((conv.point - expected).norm() < 1e-9);
            assert!((conv.rms_residual - base.rms_residual).abs() < 1e-9);
        }
    }

    fn bundle_through(target: Point3<f64>, origins: &[Point3<f64>]) -> CornerBundle {
        CornerBundle {
            corner: Corner::TopLeft,
            rays: origins
                .iter()
                .enumerate()
                .map(|(i, &o)| (i as u32, Ray3::new(o, target - o)))
                .collect(),
        }
    }

    #[test]
    fn filter_rejects_all_parallel_bundle() {
        let rays: Vec<(u32, Ray3)> = (0..5)
            .map(|i| (i, ray([i as f64, 0.0, 0.0], [0.0, 0.0, 1.0])))
            .collect();
        let bundle = CornerBundle {
            corner: Corner::TopLeft,
            rays,
        };
        assert!(matches!(
            filter_rays(&bundle, &default_cfg()),
            Err(TriangulationError::TooFewInliers { survivors: 1, .. })
        ));
    }

    #[test]
    fn filter_drops_decoy_rays() {
        let target = Point3::new(0.0, 0.0, 5.0);
        let decoy = Point3::new(5.0, 0.0, 5.0);
        let good_origins: Vec<Point3<f64>> = (0..10)
            .map(|i| {
                let a = i as f64 / 10.0 * std::f64::consts::TAU;
                Point3::new(2.0 * a.cos(), 2.0 * a.sin(), 0.0)
            })
            .collect();
        let mut bundle = bundle_through(target, &good_origins);
        for (i, &o) in [Point3::new(0.5, 2.5, -1.0), Point3::new(-1.5, -2.0, -0.5)]
            .iter()
            .enumerate()
        {
            bundle.rays.push((100 + i as u32, Ray3::new(o, decoy - o)));
        }
        let filtered = filter_rays(&bundle, &default_cfg()).unwrap();
        assert_eq!(filtered.rays.len(), 10);
        assert!(filtered.rays.iter().all(|(f, _)| *f < 100));
    }

    #[test]
    fn filter_keeps_minimal_clean_bundle_and_is_idempotent() {
        let target = Point3::new(1.0, -0.5, 4.0);
        let origins = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(3.0, 0.0, 0.0),
            Point3::new(0.0, 3.0, 0.0),
        ];
        let bundle = bundle_through(target, &origins);
        let cfg = default_cfg();
        let once = filter_rays(&bundle, &cfg).unwrap();
        assert_eq!(once, bundle);
        let twice = filter_rays(&once, &cfg).unwrap();
        assert_eq!(twice, once);
    }

    #[test]
    fn filter_idempotent_after_dropping_decoys() {
        let target = Point3::new(0.0, 0.0, 5.0);
        let origins: Vec<Point3<f64>> = (0..8)
            .map(|i| {
                let a = i as f64 / 8.0 * std::f64::consts::TAU;
                Point3::new(2.0 * a.cos(), 2.0 * a.sin(), 0.0)
            })
            .collect();
        let mut bundle = bundle_through(target, &origins);
        let decoy = Point3::new(4.0, 4.0, 5.0);
        let o = Point3::new(0.0, -2.5, -1.0);
        bundle.rays.push((99, Ray3::new(o, decoy - o)));
        let cfg = default_cfg();
        let once = filter_rays(&bundle, &cfg).unwrap();
        assert_eq!(once.rays.len(), 8);
        let twice = filter_rays(&once, &cfg).unwrap();
        assert_eq!(twice, once);
    }

    #[test]
    fn corner_rays_require_registration() {
        let intr = CameraIntrinsics::simple_radial(100, 100, 100.0, 50.0, 50.0, 0.0).unwrap();
        let frame = CalibratedFrame {
            frame_index: 0,
            camera_id: 1,
            pose: None,
        };
        let b = BBox2D::new(10.0, 10.0, 20.0, 20.0).unwrap();
        assert!(matches!(
            corner_rays(&b, &frame, &intr),
            Err(TriangulationError::UnregisteredFrame(0))
        ));
    }

    #[test]
    fn centered_box_rays_are_symmetric_about_axis() {
        let intr = CameraIntrinsics::simple_radial(100, 100, 100.0, 50.0, 50.0, 0.0).unwrap();
        let frame = CalibratedFrame {
            frame_index: 0,
            camera_id: 1,
            pose: Some(CameraPose::identity()),
        };
        let b = BBox2D::new(40.0, 40.0, 60.0, 60.0).unwrap();
        let rays = corner_rays(&b, &frame, &intr).unwrap();
        let axis = Vector3::new(0.0, 0.0, 1.0);
        let angles: Vec<f64> = rays
            .iter()
            .map(|(_, r)| r.direction.dot(&axis).acos())
            .collect();
        for a in &angles[1..] {
            assert!((a - angles[0]).abs() < 1e-12);
        }
        // and the mean lateral component cancels
        let sum: Vector3<f64> = rays.iter().map(|(_, r)| r.direction.into_inner()).sum();
        assert!(sum.x.abs() < 1e-12 && sum.y.abs() < 1e-12);
    }

    #[test]
    fn insufficient_views_reported() {
        let intr = CameraIntrinsics::simple_radial(100, 100, 100.0, 50.0, 50.0, 0.0).unwrap();
        let cameras = BTreeMap::from([(1u32, intr)]);
        let frames: Vec<CalibratedFrame> = (0..2)
            .map(|i| CalibratedFrame {
                frame_index: i,
                camera_id: 1,
                pose: Some(CameraPose::identity()),
            })
            .collect();
        let b = BBox2D::new(10.0, 10.0, 20.0, 20.0).unwrap();
        let boxes: BTreeMap<u32, BBox2D> = (0..2).map(|i| (i, b)).collect();
        let err = triangulate_box(&boxes, &frames, &cameras, &default_cfg()).unwrap_err();
        assert_eq!(
            err,
            TriangulationError::InsufficientViews {
                available: 2,
                required: 3
            }
        );
    }

    #[test]
    fn reproject_behind_camera_is_absent() {
        let intr = CameraIntrinsics::simple_radial(100, 100, 100.0, 50.0, 50.0, 0.0).unwrap();
        // camera rotated 180 degrees away: z_cam = -z_world
        let pose = CameraPose::new(
            UnitQuaternion::from_scaled_axis(Vector3::new(0.0, std::f64::consts::PI, 0.0)),
            Vector3::zeros(),
        );
        let frame = CalibratedFrame {
            frame_index: 0,
            camera_id: 1,
            pose: Some(pose),
        };
        let corners = [
            Point3::new(-0.5, -0.5, 5.0),
            Point3::new(0.5, -0.5, 5.0),
            Point3::new(-0.5, 0.5, 5.0),
            Point3::new(0.5, 0.5, 5.0),
        ];
        assert_eq!(reproject_box(&corners, &frame, &intr), BBox2D::Absent);
    }

    #[test]
    fn reproject_clips_partially_visible_box() {
        let intr = CameraIntrinsics::simple_radial(100, 100, 100.0, 50.0, 50.0, 0.0).unwrap();
        let frame = CalibratedFrame {
            frame_index: 0,
            camera_id: 1,
            pose: Some(CameraPose::identity()),
        };
        // projects to u in [-10, 30], v in [40, 60]: clipped at the left edge
        let corners = [
            Point3::new(-0.6, -0.1, 1.0),
            Point3::new(-0.2, -0.1, 1.0),
            Point3::new(-0.6, 0.1, 1.0),
            Point3::new(-0.2, 0.1, 1.0),
        ];
        let b = reproject_box(&corners, &frame, &intr);
        assert_eq!(b, BBox2D::new(0.0, 40.0, 30.0, 60.0).unwrap());
    }
}
