//! Constant-velocity Kalman filter over (cx, cy, aspect, h) box state,
//! with the height-scaled noise weights used by ByteTrack-style trackers.

use nalgebra::{SMatrix, SVector};

use super::TrackingError;
use crate::geometry::BBox2D;

pub type StateVector = SVector<f64, 8>;
pub type StateCovariance = SMatrix<f64, 8, 8>;
type Measurement = SVector<f64, 4>;

const STD_WEIGHT_POSITION: f64 = 1.0 / 20.0;
const STD_WEIGHT_VELOCITY: f64 = 1.0 / 160.0;

/// Filter state: (cx, cy, aspect, h) and their per-frame velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVector,
    pub covariance: StateCovariance,
}

fn measurement_of(bbox: &BBox2D) -> Result<Measurement, TrackingError> {
    let [x1, y1, x2, y2] = bbox.corners().ok_or(TrackingError::NonPositiveHeight)?;
    let w = x2 - x1;
    let h = y2 - y1;
    if h <= 0.0 {
        return Err(TrackingError::NonPositiveHeight);
    }
    Ok(Measurement::new((x1 + x2) / 2.0, (y1 + y2) / 2.0, w / h, h))
}

impl KalmanState {
    /// Starts a track from its first measurement with zero velocity and
    /// a broad height-scaled covariance.
    pub fn initiate(bbox: &BBox2D) -> Result<Self, TrackingError> {
        let z = measurement_of(bbox)?;
        let h = z[3];
        let mut mean = StateVector::zeros();
        for i in 0..4 {
            mean[i] = z[i];
        }
        let std = [
            2.0 * STD_WEIGHT_POSITION * h,
            2.0 * STD_WEIGHT_POSITION * h,
            1e-2,
            2.0 * STD_WEIGHT_POSITION * h,
            10.0 * STD_WEIGHT_VELOCITY * h,
            10.0 * STD_WEIGHT_VELOCITY * h,
            1e-5,
            10.0 * STD_WEIGHT_VELOCITY * h,
        ];
        let mut covariance = StateCovariance::zeros();
        for i in 0..8 {
            covariance[(i, i)] = std[i] * std[i];
        }
        Ok(Self { mean, covariance })
    }

    /// The box described by the current mean, `Absent` when the state has
    /// degenerated to a non-positive extent.
    pub fn predicted_box(&self) -> BBox2D {
        let (cx, cy, a, h) = (self.mean[0], self.mean[1], self.mean[2], self.mean[3]);
        let w = a * h;
        if h <= 0.0 || w <= 0.0 {
            return BBox2D::Absent;
        }
        BBox2D::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
            .unwrap_or(BBox2D::Absent)
    }
}

/// Propagates the state `dt` frames forward under the constant-velocity
/// model; process noise is injected per frame, scaled to box height.
pub fn kalman_predict(state: &KalmanState, dt: u32) -> KalmanState {
    let mut motion = StateCovariance::identity();
    for i in 0..4 {
        motion[(i, i + 4)] = 1.0;
    }
    let mut out = state.clone();
    for _ in 0..dt {
        let h = out.mean[3];
        let std = [
            STD_WEIGHT_POSITION * h,
            STD_WEIGHT_POSITION * h,
            1e-2,
            STD_WEIGHT_POSITION * h,
            STD_WEIGHT_VELOCITY * h,
            STD_WEIGHT_VELOCITY * h,
            1e-5,
            STD_WEIGHT_VELOCITY * h,
        ];
        let mut process_noise = StateCovariance::zeros();
        for i in 0..8 {
            process_noise[(i, i)] = std[i] * std[i];
        }
        out.mean = motion * out.mean;
        out.covariance = motion * out.covariance * motion.transpose() + process_noise;
    }
    out
}

/// Standard gain-based correction in measurement space. The covariance
/// update uses the Joseph form, which preserves symmetry and positive
/// semidefiniteness over long predict/update chains.
pub fn kalman_update(
    state: &KalmanState,
    measurement: &BBox2D,
) -> Result<KalmanState, TrackingError> {
    let z = measurement_of(measurement)?;
    let h_mat = SMatrix::<f64, 4, 8>::identity();

    let h = state.mean[3];
    let std = [
        STD_WEIGHT_POSITION * h,
        STD_WEIGHT_POSITION * h,
        1e-1,
        STD_WEIGHT_POSITION * h,
    ];
    let mut meas_noise = SMatrix::<f64, 4, 4>::zeros();
    for i in 0..4 {
        meas_noise[(i, i)] = std[i] * std[i];
    }

    let innovation_cov = h_mat * state.covariance * h_mat.transpose() + meas_noise;
    let inv = innovation_cov
        .cholesky()
        .ok_or(TrackingError::SingularInnovation)?
        .inverse();
    let gain = state.covariance * h_mat.transpose() * inv;

    let innovation = z - h_mat * state.mean;
    let mean = state.mean + gain * innovation;
    let identity_minus = StateCovariance::identity() - gain * h_mat;
    let covariance = identity_minus * state.covariance * identity_minus.transpose()
        + gain * meas_noise * gain.transpose();

    Ok(KalmanState { mean, covariance })
}
