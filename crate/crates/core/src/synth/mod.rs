//! Fully known synthetic scenes: camera trajectories, a planar 3D target,
//! rendered GT boxes, scored noisy detections and distractors. Ground
//! truth for validating metrics, tracking and triangulation end to end.

mod oracle;

pub use oracle::{oracle_clip_metrics, oracle_split_report, quantize_clip, quantize_clips};

use std::collections::BTreeMap;

use nalgebra::{Point3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox2D, CameraIntrinsics, CameraPose};
use crate::io::{
    serialize_cameras, serialize_images, AnnotationClip, AnnotationFile, AnnotationFrame, ClipTags,
    ColmapImage, Movement, PredictionClip, PredictionFile, PredictionFrame, ScoredBox, Uniqueness,
};
use crate::triangulation::{reproject_box, CalibratedFrame};

/// Distance from the camera rig to the target plane.
const CAMERA_STANDOFF: f64 = 6.0;
/// Total in-plane drift of a moving target across the clip.
const MOVING_DRIFT: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("degenerate scene spec: {0}")]
    DegenerateSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trajectory {
    /// Cameras on a lateral ring facing the target plane head-on.
    Orbit { radius: f64, n_frames: usize },
    /// Camera sliding toward the plane along the viewing axis.
    Dolly {
        start_dist: f64,
        end_dist: f64,
        n_frames: usize,
    },
    /// Jittered viewpoints around the nominal standoff.
    Shake { amplitude: f64, n_frames: usize },
}

impl Trajectory {
    pub fn n_frames(&self) -> usize {
        match *self {
            Trajectory::Orbit { n_frames, .. }
            | Trajectory::Dolly { n_frames, .. }
            | Trajectory::Shake { n_frames, .. } => n_frames,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Gaussian noise added to each detection corner coordinate, pixels.
    pub pixel_sigma: f64,
    /// Gaussian noise on confidence scores.
    pub score_noise: f64,
    /// Probability of the target detection dropping out of a frame.
    pub dropout_prob: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            pixel_sigma: 0.0,
            score_noise: 0.0,
            dropout_prob: 0.0,
        }
    }
}

/// A deterministic scene recipe. The target is a planar rectangle given
/// by its [TL, TR, BL, BR] corners in the canonical frame, where the
/// camera rig views the z = const target plane head-on; the whole scene
/// is then re-expressed through a seeded rigid transform, so emitted
/// poses are general while ground-truth boxes stay corner-faithful.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub trajectory: Trajectory,
    /// Four coplanar corners, [TL, TR, BL, BR], all with equal z.
    pub target_box3d: [[f64; 3]; 4],
    /// Additional target-like planar boxes that generate decoy detections.
    #[serde(default)]
    pub distractors: Vec<[[f64; 3]; 4]>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub moving_target: bool,
}

impl SceneSpec {
    /// A mixed-difficulty default: ring trajectory wide enough to push the
    /// target out of frame at the extremes, one distractor, mild noise.
    pub fn default_spec() -> Self {
        Self {
            seed: 7,
            trajectory: Trajectory::Orbit {
                radius: 3.5,
                n_frames: 16,
            },
            target_box3d: rectangle(0.0, 0.0, 1.2, 0.8),
            distractors: vec![rectangle(2.4, 0.3, 1.2, 0.8)],
            noise: NoiseSpec {
                pixel_sigma: 1.0,
                score_noise: 0.05,
                dropout_prob: 0.05,
            },
            moving_target: false,
        }
    }
}

/// [TL, TR, BL, BR] corners of an axis-aligned rectangle in the target
/// plane, centered at (cx, cy).
pub fn rectangle(cx: f64, cy: f64, width: f64, height: f64) -> [[f64; 3]; 4] {
    let (hw, hh) = (width / 2.0, height / 2.0);
    [
        [cx - hw, cy - hh, 0.0],
        [cx + hw, cy - hh, 0.0],
        [cx - hw, cy + hh, 0.0],
        [cx + hw, cy + hh, 0.0],
    ]
}

/// Everything the generator knows about a scene, in the emitted world
/// frame: calibrated cameras, per-frame true corners and GT boxes, plus
/// the annotation/prediction files and COLMAP text.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub clip_id: String,
    pub intrinsics: CameraIntrinsics,
    pub cameras: BTreeMap<u32, CameraIntrinsics>,
    pub frames: Vec<CalibratedFrame>,
    /// True target corners per frame ([TL, TR, BL, BR]); constant unless
    /// the target moves.
    pub gt_corners: Vec<[Point3<f64>; 4]>,
    pub gt_boxes: Vec<BBox2D>,
    pub annotations: AnnotationFile,
    pub predictions: PredictionFile,
}

impl SyntheticScene {
    pub fn colmap_cameras_text(&self) -> String {
        serialize_cameras(&self.cameras)
    }

    pub fn colmap_images_text(&self) -> String {
        let images: BTreeMap<u32, ColmapImage> = self
            .frames
            .iter()
            .map(|f| {
                (
                    f.frame_index + 1,
                    ColmapImage {
                        name: format!("frame_{:06}.jpg", f.frame_index),
                        pose: f.pose.expect("synthetic frames are registered"),
                        camera_id: f.camera_id,
                    },
                )
            })
            .collect();
        serialize_images(&images)
    }

    /// The (constant) target corners of a static scene.
    pub fn static_corners(&self) -> Option<[Point3<f64>; 4]> {
        let first = self.gt_corners.first()?;
        self.gt_corners.iter().all(|c| c == first).then_some(*first)
    }

    /// Fraction of frames without the target, per the annotation.
    pub fn target_free_fraction(&self) -> f64 {
        let absent = self.gt_boxes.iter().filter(|b| b.is_absent()).count();
        absent as f64 / self.gt_boxes.len() as f64
    }
}

fn validate(spec: &SceneSpec) -> Result<(), SynthError> {
    let n = spec.trajectory.n_frames();
    if n < 2 {
        return Err(SynthError::DegenerateSpec(format!(
            "need at least 2 frames, got {n}"
        )));
    }
    match spec.trajectory {
        Trajectory::Orbit { radius, .. } if radius < 0.0 => {
            return Err(SynthError::DegenerateSpec("negative orbit radius".into()));
        }
        Trajectory::Dolly {
            start_dist,
            end_dist,
            ..
        } if start_dist <= 0.0 || end_dist <= 0.0 => {
            return Err(SynthError::DegenerateSpec(
                "dolly distances must be positive".into(),
            ));
        }
        Trajectory::Shake { amplitude, .. } if !(0.0..CAMERA_STANDOFF).contains(&amplitude) => {
            return Err(SynthError::DegenerateSpec(format!(
                "shake amplitude must be in [0, {CAMERA_STANDOFF})"
            )));
        }
        _ => {}
    }
    let z0 = spec.target_box3d[0][2];
    if spec.target_box3d.iter().any(|c| c[2] != z0) {
        return Err(SynthError::DegenerateSpec(
            "target corners must share one z (a plane facing the rig)".into(),
        ));
    }
    let xs: Vec<f64> = spec.target_box3d.iter().map(|c| c[0]).collect();
    let ys: Vec<f64> = spec.target_box3d.iter().map(|c| c[1]).collect();
    let extent = |v: &[f64]| {
        v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - v.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    if extent(&xs) <= 0.0 || extent(&ys) <= 0.0 {
        return Err(SynthError::DegenerateSpec(
            "target box has no extent".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.noise.dropout_prob) {
        return Err(SynthError::DegenerateSpec(
            "dropout_prob must be in [0, 1]".into(),
        ));
    }
    if spec.noise.pixel_sigma < 0.0 || spec.noise.score_noise < 0.0 {
        return Err(SynthError::DegenerateSpec("negative noise sigma".into()));
    }
    Ok(())
}

fn camera_centers(trajectory: &Trajectory, rng: &mut ChaCha8Rng) -> Vec<Point3<f64>> {
    match *trajectory {
        Trajectory::Orbit { radius, n_frames } => (0..n_frames)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n_frames as f64;
                Point3::new(radius * a.cos(), radius * a.sin(), -CAMERA_STANDOFF)
            })
            .collect(),
        Trajectory::Dolly {
            start_dist,
            end_dist,
            n_frames,
        } => (0..n_frames)
            .map(|i| {
                let t = i as f64 / (n_frames - 1) as f64;
                Point3::new(0.0, 0.0, -(start_dist + t * (end_dist - start_dist)))
            })
            .collect(),
        Trajectory::Shake {
            amplitude,
            n_frames,
        } => (0..n_frames)
            .map(|_| {
                let mut j = || rng.random_range(-amplitude..=amplitude);
                Point3::new(j(), j(), -CAMERA_STANDOFF + j())
            })
            .collect(),
    }
}

fn noisy_box(b: &BBox2D, sigma: f64, normal: &Normal<f64>, rng: &mut ChaCha8Rng) -> Option<BBox2D> {
    let [x1, y1, x2, y2] = b.corners()?;
    if sigma == 0.0 {
        return Some(*b);
    }
    let mut n = || normal.sample(rng);
    let (a, b2) = (x1 + n(), x2 + n());
    let (c, d) = (y1 + n(), y2 + n());
    let bbox = BBox2D::new(a.min(b2), c.min(d), a.max(b2), c.max(d)).ok()?;
    bbox.is_present().then_some(bbox)
}

/// Generates the scene deterministically from its spec: same seed, same
/// bytes. The synthetic reconstruction is exact, so downstream
/// triangulation error isolates algorithmic error.
pub fn generate(spec: &SceneSpec) -> Result<SyntheticScene, SynthError> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_frames = spec.trajectory.n_frames();

    // the world frame is a seeded rigid re-expression of the canonical
    // rig frame, so emitted poses carry non-trivial rotations
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let angle: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let warp_rot = if axis.norm() > 1e-9 {
        UnitQuaternion::from_scaled_axis(axis.normalize() * angle)
    } else {
        UnitQuaternion::identity()
    };
    let warp_t = Vector3::new(
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
    );
    let to_world = |p: Point3<f64>| Point3::from(warp_rot.transform_vector(&p.coords) + warp_t);

    let intrinsics = CameraIntrinsics::simple_radial(640, 480, 500.0, 320.0, 240.0, 0.0)
        .expect("valid synthetic camera");
    let cameras = BTreeMap::from([(1u32, intrinsics)]);

    let centers = camera_centers(&spec.trajectory, &mut rng);
    let frames: Vec<CalibratedFrame> = centers
        .iter()
        .enumerate()
        .map(|(i, c)| {
            // canonical pose is identity rotation at center c; compose with
            // the world warp: X_cam = W^T X_world - W^T t - c
            let rotation = warp_rot.inverse();
            let translation = -(rotation.transform_vector(&warp_t)) - c.coords;
            CalibratedFrame {
                frame_index: i as u32,
                camera_id: 1,
                pose: Some(CameraPose::new(rotation, translation)),
            }
        })
        .collect();

    let corner_at = |base: &[[f64; 3]; 4], frame: usize| -> [Point3<f64>; 4] {
        let drift = if spec.moving_target {
            let t = frame as f64 / (n_frames - 1) as f64;
            MOVING_DRIFT * (t - 0.5)
        } else {
            0.0
        };
        [0, 1, 2, 3].map(|i| to_world(Point3::new(base[i][0] + drift, base[i][1], base[i][2])))
    };

    let gt_corners: Vec<[Point3<f64>; 4]> = (0..n_frames)
        .map(|i| corner_at(&spec.target_box3d, i))
        .collect();
    let gt_boxes: Vec<BBox2D> = (0..n_frames)
        .map(|i| reproject_box(&gt_corners[i], &frames[i], &intrinsics))
        .collect();
    if gt_boxes.iter().all(|b| b.is_absent()) {
        return Err(SynthError::DegenerateSpec(
            "target is never visible from the trajectory".into(),
        ));
    }

    let distractor_corners: Vec<[Point3<f64>; 4]> = spec
        .distractors
        .iter()
        .map(|d| [0, 1, 2, 3].map(|i| to_world(Point3::new(d[i][0], d[i][1], d[i][2]))))
        .collect();

    let score_normal =
        Normal::new(0.0, spec.noise.score_noise.max(0.0)).expect("validated score noise");
    let pixel_normal =
        Normal::new(0.0, spec.noise.pixel_sigma.max(0.0)).expect("validated pixel noise");

    let clip_id = format!("synth_{:08}", spec.seed);
    let mut ann_frames = Vec::with_capacity(n_frames);
    let mut pred_frames = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        ann_frames.push(AnnotationFrame {
            frame_index: i as u32,
            gt_box: gt_boxes[i].corners(),
        });

        let mut boxes = Vec::new();
        if gt_boxes[i].is_present() {
            let dropped = spec.noise.dropout_prob > 0.0 && rng.random_bool(spec.noise.dropout_prob);
            if !dropped {
                if let Some(b) = noisy_box(
                    &gt_boxes[i],
                    spec.noise.pixel_sigma,
                    &pixel_normal,
                    &mut rng,
                ) {
                    let score = (0.9 - score_normal.sample(&mut rng)).clamp(0.0, 1.0);
                    boxes.push(ScoredBox {
                        bbox: b.corners().expect("present box"),
                        score,
                    });
                }
            }
        }
        for corners in &distractor_corners {
            let proj = reproject_box(corners, &frames[i], &intrinsics);
            if proj.is_present() {
                if let Some(b) = noisy_box(&proj, spec.noise.pixel_sigma, &pixel_normal, &mut rng) {
                    let score = (0.4 + score_normal.sample(&mut rng)).clamp(0.0, 1.0);
                    boxes.push(ScoredBox {
                        bbox: b.corners().expect("present box"),
                        score,
                    });
                }
            }
        }
        pred_frames.push(PredictionFrame {
            frame_index: i as u32,
            boxes,
        });
    }

    let annotations = AnnotationFile {
        clips: vec![AnnotationClip {
            clip_id: clip_id.clone(),
            expression: "the synthetic target panel among look-alike panels".into(),
            fps_annotated: 2.0,
            frames: ann_frames,
            tags: Some(ClipTags {
                uniqueness: if spec.distractors.is_empty() {
                    Uniqueness::Single
                } else {
                    Uniqueness::Multiple
                },
                movement: if spec.moving_target {
                    Movement::Moving
                } else {
                    Movement::Static
                },
            }),
        }],
    };
    let predictions = PredictionFile {
        clips: vec![PredictionClip {
            clip_id: clip_id.clone(),
            frames: pred_frames,
        }],
    };

    Ok(SyntheticScene {
        clip_id,
        intrinsics,
        cameras,
        frames,
        gt_corners,
        gt_boxes,
        annotations,
        predictions,
    })
}
