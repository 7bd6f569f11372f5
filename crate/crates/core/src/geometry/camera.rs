//! Simple-radial pinhole camera: projection, undistortion and back-projection.

use nalgebra::{Point3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Points closer than this to the image plane are treated as behind the camera.
pub const MIN_PROJECTION_DEPTH: f64 = 1e-6;

const UNDISTORT_MAX_ITERS: usize = 20;
const UNDISTORT_STEP_TOL: f64 = 1e-12;
const UNDISTORT_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CameraModel {
    SimpleRadial,
}

/// Intrinsics of a simple-radial lens: one focal length, principal point
/// and a single radial distortion coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub model: CameraModel,
    pub width: u32,
    pub height: u32,
    /// Focal length in pixels.
    pub f: f64,
    pub cx: f64,
    pub cy: f64,
    /// Radial distortion coefficient (dimensionless).
    pub k: f64,
}

impl CameraIntrinsics {
    pub fn simple_radial(
        width: u32,
        height: u32,
        f: f64,
        cx: f64,
        cy: f64,
        k: f64,
    ) -> Result<Self, GeometryError> {
        if !f.is_finite() || f <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal length must be positive, got {f}"
            )));
        }
        if !(0.0..=width as f64).contains(&cx) || !(0.0..=height as f64).contains(&cy) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            model: CameraModel::SimpleRadial,
            width,
            height,
            f,
            cx,
            cy,
            k,
        })
    }
}

/// World-to-camera rigid transform in the COLMAP convention:
/// `X_cam = R * X_world + T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl CameraPose {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    /// Camera center in world coordinates, `C = -R^T * T`.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(-self.rotation.inverse_transform_vector(&self.translation))
    }

    pub fn to_camera(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation.transform_vector(&p.coords) + self.translation)
    }
}

/// A half-line in world space with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray3 {
    pub origin: Point3<f64>,
    pub direction: Unit<Vector3<f64>>,
}

impl Ray3 {
    pub fn new(origin: Point3<f64>, direction: Vector3<f64>) -> Self {
        Self {
            origin,
            direction: Unit::new_normalize(direction),
        }
    }

    pub fn point_at(&self, s: f64) -> Point3<f64> {
        self.origin + self.direction.into_inner() * s
    }

    /// Perpendicular distance from `p` to the line carrying the ray.
    pub fn distance_to(&self, p: &Point3<f64>) -> f64 {
        let v = p - self.origin;
        let along = self.direction.dot(&v);
        (v - self.direction.into_inner() * along).norm()
    }
}

/// Outcome of projecting a world point: a pixel, or a marker that the
/// point lies behind the camera. Not an error; callers branch on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projected {
    Pixel { u: f64, v: f64 },
    BehindCamera,
}

impl Projected {
    pub fn pixel(self) -> Option<(f64, f64)> {
        match self {
            Projected::Pixel { u, v } => Some((u, v)),
            Projected::BehindCamera => None,
        }
    }
}

/// Projects a world point through pose and lens to pixel coordinates.
pub fn project_point(p: &Point3<f64>, pose: &CameraPose, intr: &CameraIntrinsics) -> Projected {
    let cam = pose.to_camera(p);
    if cam.z <= MIN_PROJECTION_DEPTH {
        return Projected::BehindCamera;
    }
    let x = cam.x / cam.z;
    let y = cam.y / cam.z;
    let r2 = x * x + y * y;
    let factor = 1.0 + intr.k * r2;
    Projected::Pixel {
        u: intr.f * x * factor + intr.cx,
        v: intr.f * y * factor + intr.cy,
    }
}

/// Inverts the radial distortion `r_d = r * (1 + k * r^2)` by Newton
/// iteration on the cubic. Returns the undistorted radius.
fn undistort_radius(rd: f64, k: f64) -> Result<f64, GeometryError> {
    if rd == 0.0 || k == 0.0 {
        return Ok(rd);
    }
    let mut r = rd;
    for _ in 0..UNDISTORT_MAX_ITERS {
        let g = k * r * r * r + r - rd;
        let dg = 3.0 * k * r * r + 1.0;
        if dg.abs() < 1e-12 {
            break;
        }
        let step = g / dg;
        r -= step;
        if !r.is_finite() {
            return Err(GeometryError::DivergentUndistortion { rd, k });
        }
        if step.abs() < UNDISTORT_STEP_TOL {
            break;
        }
    }
    let residual = (k * r * r * r + r - rd).abs();
    if r < 0.0 || residual > UNDISTORT_RESIDUAL_TOL * rd.abs().max(1.0) {
        return Err(GeometryError::DivergentUndistortion { rd, k });
    }
    Ok(r)
}

/// Back-projects a pixel to its viewing ray in world space.
///
/// The ray satisfies the round-trip contract: projecting any point
/// `origin + s * direction` with `s > 0` lands back on `(u, v)`.
pub fn pixel_to_ray(
    u: f64,
    v: f64,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
) -> Result<Ray3, GeometryError> {
    let xd = (u - intr.cx) / intr.f;
    let yd = (v - intr.cy) / intr.f;
    let rd = (xd * xd + yd * yd).sqrt();
    let r = undistort_radius(rd, intr.k)?;
    let scale = if rd > 0.0 { r / rd } else { 1.0 };
    let dir_cam = Vector3::new(xd * scale, yd * scale, 1.0);
    let dir_world = pose.rotation.inverse_transform_vector(&dir_cam);
    Ok(Ray3::new(pose.center(), dir_world))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn test_intr(k: f64) -> CameraIntrinsics {
        CameraIntrinsics::simple_radial(100, 100, 100.0, 50.0, 50.0, k).unwrap()
    }

    fn random_pose(rng: &mut StdRng) -> CameraPose {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let angle: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let rotation = UnitQuaternion::from_scaled_axis(axis.normalize() * angle);
        let translation = Vector3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        );
        CameraPose::new(rotation, translation)
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::simple_radial(10, 10, 0.0, 5.0, 5.0, 0.0).is_err());
        assert!(CameraIntrinsics::simple_radial(10, 10, 1.0, 50.0, 5.0, 0.0).is_err());
        assert!(CameraIntrinsics::simple_radial(10, 10, 1.0, 5.0, 5.0, 0.0).is_ok());
    }

    #[test]
    fn project_on_axis_hits_principal_point() {
        let intr = test_intr(0.0);
        let pose = CameraPose::identity();
        let p = Point3::new(0.0, 0.0, 10.0);
        assert_eq!(
            project_point(&p, &pose, &intr),
            Projected::Pixel { u: 50.0, v: 50.0 }
        );
    }

    #[test]
    fn project_off_axis_point() {
        let intr = test_intr(0.0);
        let pose = CameraPose::identity();
        let (u, v) = project_point(&Point3::new(1.0, 0.0, 10.0), &pose, &intr)
            .pixel()
            .unwrap();
        assert!((u - 60.0).abs() < 1e-12);
        assert!((v - 50.0).abs() < 1e-12);
    }

    #[test]
    fn negative_depth_is_behind_camera() {
        let intr = test_intr(0.0);
        let pose = CameraPose::identity();
        assert_eq!(
            project_point(&Point3::new(0.0, 0.0, -1.0), &pose, &intr),
            Projected::BehindCamera
        );
        assert_eq!(
            project_point(&Point3::new(0.0, 0.0, 0.0), &pose, &intr),
            Projected::BehindCamera
        );
    }

    #[test]
    fn principal_point_ray_is_optical_axis() {
        let intr = test_intr(0.0);
        let pose = CameraPose::identity();
        let ray = pixel_to_ray(50.0, 50.0, &pose, &intr).unwrap();
        assert!((ray.origin.coords.norm()) < 1e-15);
        assert!((ray.direction.into_inner() - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn one_focal_length_off_axis_ray() {
        let intr = test_intr(0.0);
        let pose = CameraPose::identity();
        let ray = pixel_to_ray(150.0, 50.0, &pose, &intr).unwrap();
        let expect = Vector3::new(1.0, 0.0, 1.0).normalize();
        assert!((ray.direction.into_inner() - expect).norm() < 1e-15);
    }

    #[test]
    fn camera_center_matches_inverse_transform() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..100 {
            let pose = random_pose(&mut rng);
            let c = pose.center();
            // the center maps to the camera origin
            assert!(pose.to_camera(&c).coords.norm() < 1e-12);
        }
    }

    #[test]
    fn round_trip_ray_projection_with_distortion() {
        let mut rng = StdRng::seed_from_u64(5);
        for trial in 0..1000 {
            let pose = random_pose(&mut rng);
            let f: f64 = rng.random_range(200.0..1500.0);
            let w = 2.0 * f * 0.7;
            let intr = CameraIntrinsics::simple_radial(
                w as u32,
                w as u32,
                f,
                w / 2.0,
                w / 2.0,
                rng.random_range(-0.05..0.05),
            )
            .unwrap();
            // synthesize a camera-frame point with bounded view angle
            let z: f64 = rng.random_range(0.5..100.0);
            let cam = Point3::new(
                z * rng.random_range(-0.6..0.6),
                z * rng.random_range(-0.6..0.6),
                z,
            );
            let world = Point3::from(
                pose.rotation
                    .inverse_transform_vector(&(cam.coords - pose.translation)),
            );
            let (u, v) = project_point(&world, &pose, &intr).pixel().unwrap();
            let ray = pixel_to_ray(u, v, &pose, &intr).unwrap();
            for s in [0.7, 1.0, 37.5] {
                let (ru, rv) = project_point(&ray.point_at(s), &pose, &intr)
                    .pixel()
                    .unwrap();
                assert!(
                    (ru - u).abs() < 1e-6 && (rv - v).abs() < 1e-6,
                    "trial {trial}: ({u}, {v}) -> ({ru}, {rv})"
                );
            }
            // the ray passes through the original point
            assert!(ray.distance_to(&world) < 1e-6 * z);
        }
    }

    #[test]
    fn round_trip_fixed_distortion_example() {
        let intr = test_intr(0.01);
        let pose = CameraPose::identity();
        for (u, v) in [(10.0, 80.0), (0.0, 0.0), (99.0, 40.0)] {
            let ray = pixel_to_ray(u, v, &pose, &intr).unwrap();
            let (ru, rv) = project_point(&ray.point_at(5.0), &pose, &intr)
                .pixel()
                .unwrap();
            assert!((ru - u).abs() < 1e-6);
            assert!((rv - v).abs() < 1e-6);
        }
    }

    #[test]
    fn undistortion_divergence_is_reported() {
        // strong negative k: the distorted radius saturates, far pixels
        // have no preimage
        let intr =
            CameraIntrinsics::simple_radial(4000, 4000, 100.0, 2000.0, 2000.0, -0.1).unwrap();
        let pose = CameraPose::identity();
        let err = pixel_to_ray(3999.0, 2000.0, &pose, &intr).unwrap_err();
        assert!(matches!(err, GeometryError::DivergentUndistortion { .. }));
    }

    #[test]
    fn projection_invariant_under_rigid_reexpression() {
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..200 {
            let pose = random_pose(&mut rng);
            let intr = test_intr(rng.random_range(-0.02..0.02));
            let z: f64 = rng.random_range(1.0..20.0);
            let cam = Point3::new(z * 0.2, -z * 0.1, z);
            let world = Point3::from(
                pose.rotation
                    .inverse_transform_vector(&(cam.coords - pose.translation)),
            );

            // re-express the world through a rigid map and compensate the pose
            let warp = random_pose(&mut rng);
            let world2 =
                Point3::from(warp.rotation.transform_vector(&world.coords) + warp.translation);
            let rot2 = pose.rotation * warp.rotation.inverse();
            let trans2 = pose.translation - rot2.transform_vector(&warp.translation);
            let pose2 = CameraPose::new(rot2, trans2);

            let (u1, v1) = project_point(&world, &pose, &intr).pixel().unwrap();
            let (u2, v2) = project_point(&world2, &pose2, &intr).pixel().unwrap();
            assert!((u1 - u2).abs() < 1e-9 && (v1 - v2).abs() < 1e-9);
        }
    }
}
