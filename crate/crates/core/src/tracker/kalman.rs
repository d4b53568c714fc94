//! Constant-velocity Kalman filter over `(cx, cy, w, h)` and their
//! per-frame velocities.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::TrackerConfig;
use crate::error::{Error, Result};
use crate::trackdata::BoundingBox;

pub type Vector8 = SVector<f64, 8>;
pub type Matrix8 = SMatrix<f64, 8, 8>;
type Vector4 = SVector<f64, 4>;
type Matrix4 = SMatrix<f64, 4, 4>;
type Matrix4x8 = SMatrix<f64, 4, 8>;

/// Diagonal of the unscaled process noise: positions, then velocities.
const PROCESS_NOISE_DIAG: [f64; 8] = [1.0, 1.0, 1.0, 1.0, 1e-2, 1e-2, 1e-4, 1e-4];
/// Prior velocity variance for a track born from a single detection.
const INITIAL_VELOCITY_VAR: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KalmanState {
    /// `(cx, cy, w, h, vcx, vcy, vw, vh)`, pixels and pixels/frame.
    pub mean: Vector8,
    pub covariance: Matrix8,
}

fn transition() -> Matrix8 {
    let mut f = Matrix8::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn observation() -> Matrix4x8 {
    let mut h = Matrix4x8::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn process_noise(config: &TrackerConfig) -> Matrix8 {
    Matrix8::from_diagonal(&Vector8::from(PROCESS_NOISE_DIAG)) * config.process_noise_scale
}

fn measurement_noise(config: &TrackerConfig) -> Matrix4 {
    Matrix4::identity() * config.measurement_noise_scale
}

fn measurement(z: &BoundingBox) -> Vector4 {
    Vector4::new(z.cx, z.cy, z.w, z.h)
}

fn symmetrize(m: &Matrix8) -> Matrix8 {
    (m + m.transpose()) * 0.5
}

impl KalmanState {
    /// Track born from one detection: position from the box, zero velocity.
    pub fn from_measurement(z: &BoundingBox, config: &TrackerConfig) -> Self {
        let mut mean = Vector8::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(&measurement(z));
        let mut cov = Matrix8::zeros();
        for i in 0..4 {
            cov[(i, i)] = config.measurement_noise_scale;
            cov[(i + 4, i + 4)] = INITIAL_VELOCITY_VAR * config.process_noise_scale;
        }
        KalmanState {
            mean,
            covariance: cov,
        }
    }

    /// Two-point initialization: position from `z`, velocity from the
    /// difference to `previous` over `frames` frames. The covariance is the
    /// exact one implied by two independent measurements with noise `R`.
    pub fn from_two_measurements(
        previous: &BoundingBox,
        z: &BoundingBox,
        frames: u64,
        config: &TrackerConfig,
    ) -> Self {
        let dt = frames.max(1) as f64;
        let zp = measurement(previous);
        let zc = measurement(z);
        let mut mean = Vector8::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(&zc);
        mean.fixed_rows_mut::<4>(4).copy_from(&((zc - zp) / dt));
        let r = config.measurement_noise_scale;
        let mut cov = Matrix8::zeros();
        for i in 0..4 {
            cov[(i, i)] = r;
            cov[(i, i + 4)] = r / dt;
            cov[(i + 4, i)] = r / dt;
            cov[(i + 4, i + 4)] =
                2.0 * r / (dt * dt) + PROCESS_NOISE_DIAG[i + 4] * config.process_noise_scale;
        }
        KalmanState {
            mean,
            covariance: cov,
        }
    }

    /// Position part as a box; sizes floored at 1e-3 px so the box stays valid.
    pub fn bbox(&self) -> BoundingBox {
        BoundingBox {
            cx: self.mean[0],
            cy: self.mean[1],
            w: self.mean[2].max(1e-3),
            h: self.mean[3].max(1e-3),
        }
    }

    /// Symmetric within 1e-9 (relative) and Cholesky-factorizable after 1e-12
    /// diagonal jitter.
    pub fn is_valid(&self) -> bool {
        let p = &self.covariance;
        let scale = p.amax().max(1.0);
        if (p - p.transpose()).amax() > 1e-9 * scale {
            return false;
        }
        (p + Matrix8::identity() * 1e-12).cholesky().is_some()
    }
}

/// `x' = F x`, `P' = F P Fᵀ + Q`.
pub fn kalman_predict(state: &KalmanState, config: &TrackerConfig) -> KalmanState {
    let f = transition();
    KalmanState {
        mean: f * state.mean,
        covariance: symmetrize(&(f * state.covariance * f.transpose() + process_noise(config))),
    }
}

/// Linear measurement update with `H` selecting `(cx, cy, w, h)`.
///
/// Uses the Joseph form for the covariance. Fails when the innovation
/// covariance cannot be factorized.
pub fn kalman_update(
    state: &KalmanState,
    z: &BoundingBox,
    config: &TrackerConfig,
) -> Result<KalmanState> {
    let h = observation();
    let r = measurement_noise(config);
    let p = &state.covariance;
    let s = h * p * h.transpose() + r;
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Numerical("innovation covariance is not positive definite".into()))?;
    // K = P Hᵀ S⁻¹, solved as S Kᵀ = H P.
    let k = chol.solve(&(h * p)).transpose();
    let innovation = measurement(z) - h * state.mean;
    let mean = state.mean + k * innovation;
    let i_kh = Matrix8::identity() - k * h;
    let cov = i_kh * p * i_kh.transpose() + k * r * k.transpose();
    if !mean.iter().chain(cov.iter()).all(|v| v.is_finite()) {
        return Err(Error::Numerical("non-finite state after update".into()));
    }
    Ok(KalmanState {
        mean,
        covariance: symmetrize(&cov),
    })
}
