//! Bit-exact parsers and serializers for COLMAP text reconstructions
//! (cameras.txt / images.txt, SIMPLE_RADIAL model only).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::IoError;
use crate::geometry::{CameraIntrinsics, CameraPose};
use crate::triangulation::CalibratedFrame;

const QUATERNION_NORM_TOL: f64 = 1e-3;

/// One registered image: its file name, pose and camera reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ColmapImage {
    pub name: String,
    pub pose: CameraPose,
    pub camera_id: u32,
}

/// A parsed reconstruction. COLMAP only lists registered images; frames
/// missing from `images` are unregistered.
#[derive(Debug, Clone, PartialEq)]
pub struct ColmapReconstruction {
    pub cameras: BTreeMap<u32, CameraIntrinsics>,
    pub images: BTreeMap<u32, ColmapImage>,
}

impl ColmapReconstruction {
    /// Assembles and validates: every image must reference a known camera.
    pub fn new(
        cameras: BTreeMap<u32, CameraIntrinsics>,
        images: BTreeMap<u32, ColmapImage>,
    ) -> Result<Self, IoError> {
        for (id, image) in &images {
            if !cameras.contains_key(&image.camera_id) {
                return Err(IoError::UnknownCamera {
                    image_id: *id,
                    camera_id: image.camera_id,
                });
            }
        }
        Ok(Self { cameras, images })
    }

    /// Resolves the requested frame indices to calibrated frames, matching
    /// annotation indices to image names by trailing-digit stem (or an
    /// explicit override map from image name to frame index). Frames with
    /// no registered image come back unregistered.
    pub fn calibrated_frames(
        &self,
        frame_indices: &[u32],
        overrides: Option<&BTreeMap<String, u32>>,
    ) -> Result<Vec<CalibratedFrame>, IoError> {
        let mut by_frame: BTreeMap<u32, &ColmapImage> = BTreeMap::new();
        for image in self.images.values() {
            let idx = overrides
                .and_then(|m| m.get(&image.name).copied())
                .or_else(|| frame_index_from_name(&image.name));
            if let Some(idx) = idx {
                if let Some(prev) = by_frame.insert(idx, image) {
                    return Err(IoError::DuplicateFrameIndex {
                        frame_index: idx,
                        name_a: prev.name.clone(),
                        name_b: image.name.clone(),
                    });
                }
            }
        }
        Ok(frame_indices
            .iter()
            .map(|&frame_index| match by_frame.get(&frame_index) {
                Some(image) => CalibratedFrame {
                    frame_index,
                    camera_id: image.camera_id,
                    pose: Some(image.pose),
                },
                None => CalibratedFrame {
                    frame_index,
                    camera_id: 0,
                    pose: None,
                },
            })
            .collect())
    }
}

/// Extracts the trailing digit run of a file name's stem:
/// "frame_000123.jpg" -> 123.
pub fn frame_index_from_name(name: &str) -> Option<u32> {
    let stem = name.rsplit('/').next().unwrap_or(name);
    let stem = stem.split('.').next().unwrap_or(stem);
    let digits: String = stem
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

fn malformed(line: usize, message: impl Into<String>) -> IoError {
    IoError::MalformedLine {
        line,
        message: message.into(),
    }
}

/// Parses cameras.txt: one data line per camera,
/// `CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]`, '#' lines are comments.
pub fn parse_cameras(text: &str) -> Result<BTreeMap<u32, CameraIntrinsics>, IoError> {
    let mut cameras = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 2 {
            return Err(malformed(
                line_no,
                "expected CAMERA_ID MODEL WIDTH HEIGHT PARAMS",
            ));
        }
        let id: u32 = tokens[0]
            .parse()
            .map_err(|_| malformed(line_no, format!("bad camera id {:?}", tokens[0])))?;
        let model = tokens[1];
        if model != "SIMPLE_RADIAL" {
            return Err(IoError::UnsupportedModel {
                line: line_no,
                model: model.to_string(),
            });
        }
        if tokens.len() != 8 {
            return Err(malformed(
                line_no,
                format!(
                    "SIMPLE_RADIAL takes 4 params (f cx cy k), got {} fields",
                    tokens.len()
                ),
            ));
        }
        let num = |i: usize| -> Result<f64, IoError> {
            tokens[i]
                .parse()
                .map_err(|_| malformed(line_no, format!("bad number {:?}", tokens[i])))
        };
        let width: u32 = tokens[2]
            .parse()
            .map_err(|_| malformed(line_no, format!("bad width {:?}", tokens[2])))?;
        let height: u32 = tokens[3]
            .parse()
            .map_err(|_| malformed(line_no, format!("bad height {:?}", tokens[3])))?;
        let intr =
            CameraIntrinsics::simple_radial(width, height, num(4)?, num(5)?, num(6)?, num(7)?)
                .map_err(|e| malformed(line_no, e.to_string()))?;
        if cameras.insert(id, intr).is_some() {
            return Err(malformed(line_no, format!("duplicate camera id {id}")));
        }
    }
    Ok(cameras)
}

/// Serializes cameras to the canonical text form (shortest float
/// representation, so parse-serialize round-trips are byte-identical).
pub fn serialize_cameras(cameras: &BTreeMap<u32, CameraIntrinsics>) -> String {
    let mut out = String::new();
    out.push_str("# Camera list with one line of data per camera:\n");
    out.push_str("#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n");
    let _ = writeln!(out, "# Number of cameras: {}", cameras.len());
    for (id, c) in cameras {
        let _ = writeln!(
            out,
            "{id} SIMPLE_RADIAL {} {} {} {} {} {}",
            c.width, c.height, c.f, c.cx, c.cy, c.k
        );
    }
    out
}

/// Parses images.txt: two data lines per image, the first
/// `IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME`, the second the
/// POINTS2D list, which is read and discarded (and may be empty).
pub fn parse_images(text: &str) -> Result<BTreeMap<u32, ColmapImage>, IoError> {
    let mut images = BTreeMap::new();
    let mut pending: Option<usize> = None; // line number of an image awaiting its points line
    let mut last_line = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.trim();
        if line.starts_with('#') {
            continue;
        }
        if pending.is_some() {
            // the points2D line, possibly empty; discarded
            pending = None;
            continue;
        }
        if line.is_empty() {
            continue;
        }

        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 10 {
            return Err(malformed(
                line_no,
                format!(
                    "expected IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME, got {} fields",
                    tokens.len()
                ),
            ));
        }
        let id: u32 = tokens[0]
            .parse()
            .map_err(|_| malformed(line_no, format!("bad image id {:?}", tokens[0])))?;
        let num = |i: usize| -> Result<f64, IoError> {
            tokens[i]
                .parse()
                .map_err(|_| malformed(line_no, format!("bad number {:?}", tokens[i])))
        };
        let (qw, qx, qy, qz) = (num(1)?, num(2)?, num(3)?, num(4)?);
        let translation = Vector3::new(num(5)?, num(6)?, num(7)?);
        let camera_id: u32 = tokens[8]
            .parse()
            .map_err(|_| malformed(line_no, format!("bad camera id {:?}", tokens[8])))?;
        let name = tokens[9..].join(" ");

        let q = Quaternion::new(qw, qx, qy, qz);
        let norm = q.norm();
        if (norm - 1.0).abs() >= QUATERNION_NORM_TOL {
            return Err(IoError::MalformedPose {
                line: line_no,
                norm,
            });
        }
        // renormalize only when actually needed: dividing an already
        // unit-norm quaternion perturbs the last bit and would break
        // bit-exact round trips of canonical files
        let rotation = if (norm - 1.0).abs() < 1e-12 {
            nalgebra::Unit::new_unchecked(q)
        } else {
            UnitQuaternion::from_quaternion(q)
        };
        let pose = CameraPose::new(rotation, translation);
        if images
            .insert(
                id,
                ColmapImage {
                    name,
                    pose,
                    camera_id,
                },
            )
            .is_some()
        {
            return Err(malformed(line_no, format!("duplicate image id {id}")));
        }
        pending = Some(line_no);
    }
    if pending.is_some() {
        return Err(malformed(
            last_line,
            "odd number of data lines: image entry missing its POINTS2D line",
        ));
    }
    Ok(images)
}

/// Serializes images to the canonical text form with empty POINTS2D lines.
pub fn serialize_images(images: &BTreeMap<u32, ColmapImage>) -> String {
    let mut out = String::new();
    out.push_str("# Image list with two lines of data per image:\n");
    out.push_str("#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n");
    out.push_str("#   POINTS2D[] as (X, Y, POINT3D_ID)\n");
    let _ = writeln!(out, "# Number of images: {}", images.len());
    for (id, image) in images {
        let q = image.pose.rotation.quaternion();
        let t = image.pose.translation;
        let _ = writeln!(
            out,
            "{id} {} {} {} {} {} {} {} {} {}",
            q.w, q.i, q.j, q.k, t.x, t.y, t.z, image.camera_id, image.name
        );
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_single_camera_line() {
        let cameras =
            parse_cameras("# comment\n1 SIMPLE_RADIAL 1920 1080 1200.5 960 540 0.01\n").unwrap();
        let c = &cameras[&1];
        assert_eq!((c.width, c.height), (1920, 1080));
        assert_eq!((c.f, c.cx, c.cy, c.k), (1200.5, 960.0, 540.0, 0.01));
    }

    #[test]
    fn comment_only_cameras_file_is_empty() {
        assert!(parse_cameras("# only comments\n# here\n")
            .unwrap()
            .is_empty());
    }

    #[test]
    fn unsupported_model_rejected_with_line() {
        let err = parse_cameras("1 PINHOLE 640 480 500 500 320 240\n").unwrap_err();
        assert_eq!(
            err,
            IoError::UnsupportedModel {
                line: 1,
                model: "PINHOLE".into()
            }
        );
    }

    #[test]
    fn malformed_camera_line_reports_location() {
        let err = parse_cameras("# ok\n1 SIMPLE_RADIAL 640 480 500\n").unwrap_err();
        assert!(matches!(err, IoError::MalformedLine { line: 2, .. }));
    }

    #[test]
    fn parse_identity_pose_image() {
        let text = "1 1 0 0 0 0 0 0 1 frame_000.jpg\n\n";
        let images = parse_images(text).unwrap();
        let img = &images[&1];
        assert_eq!(img.name, "frame_000.jpg");
        assert_eq!(img.camera_id, 1);
        assert!(img.pose.rotation.angle() < 1e-12);
        assert_eq!(img.pose.translation, Vector3::zeros());
    }

    #[test]
    fn odd_data_line_count_rejected() {
        let err = parse_images("1 1 0 0 0 0 0 0 1 a.jpg\n").unwrap_err();
        assert!(matches!(err, IoError::MalformedLine { .. }));
    }

    #[test]
    fn slightly_denormalized_quaternion_is_renormalized() {
        let text = "1 1.0001 0 0 0 0 0 0 1 a.jpg\n\n";
        let images = parse_images(text).unwrap();
        assert!((images[&1].pose.rotation.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn badly_denormalized_quaternion_rejected() {
        let err = parse_images("1 1.5 0 0 0 0 0 0 1 a.jpg\n\n").unwrap_err();
        assert!(matches!(err, IoError::MalformedPose { line: 1, .. }));
    }

    #[test]
    fn image_referencing_missing_camera_rejected() {
        let cameras = parse_cameras("1 SIMPLE_RADIAL 640 480 500 320 240 0\n").unwrap();
        let images = parse_images("1 1 0 0 0 0 0 0 9 a.jpg\n\n").unwrap();
        let err = ColmapReconstruction::new(cameras, images).unwrap_err();
        assert_eq!(
            err,
            IoError::UnknownCamera {
                image_id: 1,
                camera_id: 9
            }
        );
    }

    #[test]
    fn frame_index_extraction() {
        assert_eq!(frame_index_from_name("frame_000123.jpg"), Some(123));
        assert_eq!(frame_index_from_name("000042.png"), Some(42));
        assert_eq!(frame_index_from_name("clip7/img12.png"), Some(12));
        assert_eq!(frame_index_from_name("noframe.jpg"), None);
    }

    #[test]
    fn calibrated_frames_with_override_map() {
        let cameras = parse_cameras("1 SIMPLE_RADIAL 640 480 500 320 240 0\n").unwrap();
        let images =
            parse_images("1 1 0 0 0 0 0 0 1 odd_name.jpg\n\n2 1 0 0 0 1 0 0 1 frame_5.jpg\n\n")
                .unwrap();
        let recon = ColmapReconstruction::new(cameras, images).unwrap();

        let frames = recon.calibrated_frames(&[3, 5, 9], None).unwrap();
        assert!(!frames[0].registered()); // odd_name.jpg has no index
        assert!(frames[1].registered());
        assert!(!frames[2].registered());

        let overrides = BTreeMap::from([("odd_name.jpg".to_string(), 3u32)]);
        let frames = recon
            .calibrated_frames(&[3, 5, 9], Some(&overrides))
            .unwrap();
        assert!(frames[0].registered());
        assert!(frames[1].registered());
        assert!(!frames[2].registered());
    }

    #[test]
    fn serialize_parse_round_trip_is_bit_identical() {
        let cameras =
            parse_cameras("1 SIMPLE_RADIAL 1920 1080 1200.5 960.25 540 -0.0125\n").unwrap();
        let text = serialize_cameras(&cameras);
        assert_eq!(parse_cameras(&text).unwrap(), cameras);
        assert_eq!(serialize_cameras(&parse_cameras(&text).unwrap()), text);
    }
}
