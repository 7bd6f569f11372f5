//! Cross-module checks on fully known synthetic scenes: triangulation
//! round trips, refinement modes, fusion against clip metrics, and the
//! failure modes the geometry cannot solve.

use std::collections::BTreeMap;

use strec_core::geometry::BBox2D;
use strec_core::io::{pair_clips, top1_of_frame};
use strec_core::metrics::{
    clip_metrics, iou_plus_n, roc_curve, stiou, ClipEvaluation, FrameRecord,
};
use strec_core::synth::{generate, rectangle, NoiseSpec, SceneSpec, Trajectory};
use strec_core::tracking::{fuse_scores, run_tracker, top1_by_frame, Detection, TrackerConfig};
use strec_core::triangulation::{
    corner_rays, refine_clip, reproject_box, triangulate_box, ReplaceMode, TriangulationConfig,
    TriangulationError,
};

fn orbit_spec(seed: u64, n_frames: usize, radius: f64, noise: NoiseSpec) -> SceneSpec {
    SceneSpec {
        seed,
        trajectory: Trajectory::Orbit { radius, n_frames },
        target_box3d: rectangle(0.0, 0.0, 1.2, 0.8),
        distractors: vec![],
        noise,
        moving_target: false,
    }
}

fn top1_boxes(scene: &strec_core::synth::SyntheticScene) -> BTreeMap<u32, BBox2D> {
    scene.predictions.clips[0]
        .frames
        .iter()
        .map(|f| (f.frame_index, top1_of_frame(f).0))
        .collect()
}

#[test]
fn rendered_gt_corner_rays_pass_through_true_corners() {
    let scene = generate(&orbit_spec(29, 12, 2.0, NoiseSpec::default())).unwrap();
    let truth = scene.static_corners().unwrap();
    for (i, frame) in scene.frames.iter().enumerate() {
        if scene.gt_boxes[i].is_absent() {
            continue;
        }
        let rays = corner_rays(&scene.gt_boxes[i], frame, &scene.intrinsics).unwrap();
        for (ci, (_, ray)) in rays.iter().enumerate() {
            let d = ray.distance_to(&truth[ci]);
            assert!(d < 1e-9, "frame {i} corner {ci}: ray misses by {d}");
        }
    }
}

#[test]
fn noiseless_orbit_recovers_corners_and_reprojects_exactly() {
    let scene = generate(&orbit_spec(31, 12, 2.0, NoiseSpec::default())).unwrap();
    let truth = scene.static_corners().unwrap();
    let boxes: BTreeMap<u32, BBox2D> = scene
        .gt_boxes
        .iter()
        .enumerate()
        .map(|(i, b)| (i as u32, *b))
        .collect();

    let solved = triangulate_box(
        &boxes,
        &scene.frames,
        &scene.cameras,
        &TriangulationConfig::default(),
    )
    .unwrap();
    for (got, want) in solved.corners.iter().zip(truth.iter()) {
        assert!((got - want).norm() < 1e-6, "{got:?} vs {want:?}");
    }
    for diag in &solved.diagnostics {
        assert!(diag.rms_residual.unwrap() < 1e-9);
        assert_eq!(diag.n_inliers, diag.n_rays);
    }
    // re-projection into every contributing frame reproduces the GT box
    for (i, frame) in scene.frames.iter().enumerate() {
        let back = reproject_box(&solved.corners, frame, &scene.intrinsics);
        let gt = scene.gt_boxes[i];
        if gt.is_absent() {
            assert!(back.is_absent());
        } else {
            assert!(strec_core::geometry::iou(&back, &gt).unwrap() >= 0.99);
        }
    }
}

#[test]
fn pixel_noise_keeps_mean_reprojected_iou_high() {
    let noise = NoiseSpec {
        pixel_sigma: 1.0,
        score_noise: 0.0,
        dropout_prob: 0.0,
    };
    let scene = generate(&orbit_spec(33, 20, 2.0, noise)).unwrap();
    let solved = triangulate_box(
        &top1_boxes(&scene),
        &scene.frames,
        &scene.cameras,
        &TriangulationConfig::default(),
    )
    .unwrap();

    let mut total = 0.0;
    let mut count = 0;
    for (i, frame) in scene.frames.iter().enumerate() {
        let gt = scene.gt_boxes[i];
        if gt.is_absent() {
            continue;
        }
        let back = reproject_box(&solved.corners, frame, &scene.intrinsics);
        total += iou_plus_n(&back, &gt);
        count += 1;
    }
    let mean = total / count as f64;
    assert!(mean >= 0.9, "mean reprojected IoU {mean}");
}

#[test]
fn moving_target_reports_whole_box_failure() {
    let mut spec = orbit_spec(35, 12, 2.0, NoiseSpec::default());
    spec.moving_target = true;
    let scene = generate(&spec).unwrap();
    let boxes: BTreeMap<u32, BBox2D> = scene
        .gt_boxes
        .iter()
        .enumerate()
        .map(|(i, b)| (i as u32, *b))
        .collect();
    let err = triangulate_box(
        &boxes,
        &scene.frames,
        &scene.cameras,
        &TriangulationConfig::default(),
    )
    .unwrap_err();
    assert!(
        matches!(err, TriangulationError::CornerFailed { .. }),
        "{err}"
    );

    let refined = refine_clip(
        &boxes,
        &scene.frames,
        &scene.cameras,
        &TriangulationConfig::default(),
    );
    assert!(refined.failed);
    assert_eq!(refined.frames, boxes); // passthrough
}

#[test]
fn refine_always_restores_decoy_frames_to_perfect_stiou() {
    let scene = generate(&orbit_spec(37, 12, 2.0, NoiseSpec::default())).unwrap();
    // predictions: GT everywhere except two frames pointing at a decoy
    let mut predictions: BTreeMap<u32, BBox2D> = scene
        .gt_boxes
        .iter()
        .enumerate()
        .map(|(i, b)| (i as u32, *b))
        .collect();
    let decoy = BBox2D::new(10.0, 10.0, 90.0, 70.0).unwrap();
    predictions.insert(3, decoy);
    predictions.insert(8, decoy);

    let cfg = TriangulationConfig {
        replace_mode: ReplaceMode::Always,
        ..TriangulationConfig::default()
    };
    let refined = refine_clip(&predictions, &scene.frames, &scene.cameras, &cfg);
    assert!(!refined.failed);

    let frames: Vec<FrameRecord> = (0..12u32)
        .map(|i| FrameRecord {
            frame_index: i,
            gt: scene.gt_boxes[i as usize],
            pred: refined.frames[&i],
            pred_score: None,
        })
        .collect();
    let clip = ClipEvaluation::new("refined", frames).unwrap();
    let s = stiou(&clip);
    assert!((s.value - 1.0).abs() < 1e-6, "stiou {}", s.value);

    // the decoy frames specifically were corrected
    assert!(iou_plus_n(&refined.frames[&3], &scene.gt_boxes[3]) > 0.99);
    assert!(iou_plus_n(&refined.frames[&8], &scene.gt_boxes[8]) > 0.99);
}

#[test]
fn refine_only_absent_fills_gaps_and_keeps_predictions() {
    let scene = generate(&orbit_spec(39, 12, 2.0, NoiseSpec::default())).unwrap();
    let mut predictions: BTreeMap<u32, BBox2D> = scene
        .gt_boxes
        .iter()
        .enumerate()
        .map(|(i, b)| (i as u32, *b))
        .collect();
    let kept = BBox2D::new(100.0, 100.0, 140.0, 130.0).unwrap();
    predictions.insert(5, BBox2D::Absent); // a gap to fill
    predictions.insert(7, kept); // a wrong box OnlyAbsent must not touch

    let refined = refine_clip(
        &predictions,
        &scene.frames,
        &scene.cameras,
        &TriangulationConfig::default(), // OnlyAbsent default
    );
    assert!(!refined.failed);
    assert!(iou_plus_n(&refined.frames[&5], &scene.gt_boxes[5]) > 0.99);
    assert_eq!(refined.frames[&7], kept);

    let never = refine_clip(
        &predictions,
        &scene.frames,
        &scene.cameras,
        &TriangulationConfig {
            replace_mode: ReplaceMode::Never,
            ..TriangulationConfig::default()
        },
    );
    assert_eq!(never.frames, predictions);
    assert!(!never.diagnostics.is_empty());
}

#[test]
fn full_target_dropout_gives_low_miou_and_chance_auc() {
    let spec = SceneSpec {
        seed: 41,
        trajectory: Trajectory::Orbit {
            radius: 3.5,
            n_frames: 48,
        },
        target_box3d: rectangle(0.0, 0.0, 1.2, 0.8),
        distractors: vec![rectangle(2.4, 0.3, 1.2, 0.8)],
        noise: NoiseSpec {
            pixel_sigma: 1.0,
            score_noise: 0.05,
            dropout_prob: 1.0,
        },
        moving_target: false,
    };
    let scene = generate(&spec).unwrap();
    let (evals, _) = pair_clips(&scene.annotations, &scene.predictions).unwrap();
    let m = clip_metrics(&evals[0]);
    assert!(
        m.mean_iou().unwrap() < 0.2,
        "mIoU {}",
        m.mean_iou().unwrap()
    );

    let samples: Vec<(f64, bool)> = evals[0]
        .frames()
        .iter()
        .map(|fr| (fr.pred_score.unwrap_or(0.0), fr.gt.is_present()))
        .collect();
    let curve = roc_curve(&samples).unwrap();
    assert!(
        (0.25..=0.75).contains(&curve.auc),
        "auc {} should be near chance",
        curve.auc
    );
}

fn square(cx: f64, cy: f64, side: f64) -> BBox2D {
    BBox2D::new(
        cx - side / 2.0,
        cy - side / 2.0,
        cx + side / 2.0,
        cy + side / 2.0,
    )
    .unwrap()
}

/// The scripted crossing fixture: object A is the referred one (GT), a
/// same-class object B crosses it; mid-clip the REC score on A dips so
/// the top-1 flips to B. Fusion must restore A and improve STIoU.
#[test]
fn fusion_improves_stiou_on_crossing_fixture() {
    let a_box = |t: u32| square(20.0 + 6.0 * t as f64, 50.0, 30.0);
    let b_box = |t: u32| square(80.0 - 6.0 * t as f64, 65.0, 30.0);
    let n = 10u32;
    let dip = 5u32;

    let mut detections = Vec::new();
    for t in 0..n {
        let a_score = if t == dip { 0.1 } else { 0.85 };
        detections.push(Detection {
            frame_index: t,
            bbox: a_box(t),
            score: a_score,
        });
        detections.push(Detection {
            frame_index: t,
            bbox: b_box(t),
            score: 0.3,
        });
    }

    let cfg = TrackerConfig::default();
    let mut tracks = run_tracker(&detections, &cfg).unwrap();
    let top1 = top1_by_frame(&detections);
    assert_eq!(top1[&dip].0, b_box(dip)); // the wrong object won frame 5
    let fused = fuse_scores(&mut tracks, &top1, None);
    assert_eq!(fused[&dip].bbox, a_box(dip));

    let clip_of = |select: &dyn Fn(u32) -> BBox2D| {
        ClipEvaluation::new(
            "crossing",
            (0..n)
                .map(|t| FrameRecord {
                    frame_index: t,
                    gt: a_box(t),
                    pred: select(t),
                    pred_score: None,
                })
                .collect(),
        )
        .unwrap()
    };
    let stiou_top1 = stiou(&clip_of(&|t| top1[&t].0)).value;
    let stiou_fused = stiou(&clip_of(&|t| fused[&t].bbox)).value;
    assert!(
        stiou_fused > stiou_top1,
        "fused {stiou_fused} <= top1 {stiou_top1}"
    );
    assert!((stiou_fused - 1.0).abs() < 1e-12);
}

/// One candidate per frame: tracking and fusion must be an exact no-op
/// on both boxes and scores.
#[test]
fn single_candidate_stream_is_identity_under_fusion() {
    let scene = generate(&orbit_spec(
        43,
        16,
        2.0,
        NoiseSpec {
            pixel_sigma: 0.5,
            score_noise: 0.2,
            dropout_prob: 0.0,
        },
    ))
    .unwrap();
    let clip = &scene.predictions.clips[0];
    let detections: Vec<Detection> = strec_core::io::detections_of_clip(clip);
    let mut tracks = run_tracker(&detections, &TrackerConfig::default()).unwrap();
    let top1 = top1_by_frame(&detections);
    let fused = fuse_scores(&mut tracks, &top1, None);
    for frame in &clip.frames {
        assert_eq!(frame.boxes.len(), 1);
        let sel = &fused[&frame.frame_index];
        assert_eq!(sel.bbox.corners().unwrap(), frame.boxes[0].bbox);
        assert_eq!(sel.score, frame.boxes[0].score);
        assert!(!sel.replaced);
    }
}
