//! Measurement residuals: gyroscope and accelerometer dynamics, monocular
//! reprojection, and the initial-state prior, each with Cholesky weighting.
//!
//! The gyroscope residual uses the raw (unnormalized) polynomial quaternion;
//! the accelerometer and reprojection residuals normalize the quaternion
//! before converting it to a rotation, since a rotation from a non-unit
//! quaternion is undefined. The unit-norm constraints make the distinction
//! vanish at convergence.

use nalgebra::{Matrix2, Matrix3, SMatrix, SVector, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Quat;
use crate::trajectory::ChebTrajectory;

/// One IMU sample: gyroscope rad/s, accelerometer m/s^2.
#[derive(Debug, Clone, Copy)]
pub struct ImuSample {
    pub t: f64,
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
}

/// Normalized-coordinate observation of one tracked feature in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureObservation {
    pub frame_time: f64,
    pub feature_id: u64,
    pub xy: Vector2<f64>,
}

/// Camera-IMU extrinsics and the gravity vector, all known constants.
#[derive(Debug, Clone, Copy)]
pub struct Extrinsics {
    /// Body-to-camera rotation.
    pub cam_from_body: Matrix3<f64>,
    /// Body origin expressed in the camera frame, m.
    pub body_in_cam: Vector3<f64>,
    /// Gravity in the world frame, m/s^2.
    pub gravity: Vector3<f64>,
}

impl Extrinsics {
    /// Camera axes coincide with body axes.
    pub fn identity(gravity: Vector3<f64>) -> Self {
        Extrinsics {
            cam_from_body: Matrix3::identity(),
            body_in_cam: Vector3::zeros(),
            gravity,
        }
    }

    /// Optical axis along body +x, image right along body -y, image down
    /// along body -z (forward-looking camera on a front-left-up body).
    pub fn forward_camera(gravity: Vector3<f64>) -> Self {
        Extrinsics {
            cam_from_body: Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0),
            body_in_cam: Vector3::zeros(),
            gravity,
        }
    }
}

/// Initial-state prior mean.
#[derive(Debug, Clone, Copy)]
pub struct PriorState {
    pub q: Quat,
    pub v: Vector3<f64>,
    pub p: Vector3<f64>,
    pub ba: Vector3<f64>,
    pub bg: Vector3<f64>,
}

/// Measurement covariances. Gyro/accel covariances are per-sample (discrete)
/// at `imu_rate`; the dynamics weighting converts to the continuous-time
/// power spectral density internally. The bias random-walk PSDs only enter
/// the preintegration baseline's covariance propagation (biases are constant
/// within one estimation window).
#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub gyro_cov: Matrix3<f64>,
    pub accel_cov: Matrix3<f64>,
    pub feature_cov: Matrix2<f64>,
    pub prior_cov: SMatrix<f64, 15, 15>,
    pub gyro_walk_psd: Matrix3<f64>,
    pub accel_walk_psd: Matrix3<f64>,
    pub imu_rate: f64,
}

impl NoiseModel {
    /// Isotropic model from per-axis standard deviations. Prior stds are
    /// (attitude rad, velocity m/s, position m, accel bias, gyro bias).
    #[allow(clippy::too_many_arguments)]
    pub fn isotropic(
        gyro_std: f64,
        accel_std: f64,
        feature_std: f64,
        prior_att_std: f64,
        prior_vel_std: f64,
        prior_pos_std: f64,
        prior_ba_std: f64,
        prior_bg_std: f64,
        imu_rate: f64,
    ) -> Self {
        let mut prior_cov = SMatrix::<f64, 15, 15>::zeros();
        let stds = [prior_att_std, prior_vel_std, prior_pos_std, prior_ba_std, prior_bg_std];
        for (b, s) in stds.iter().enumerate() {
            for i in 0..3 {
                prior_cov[(3 * b + i, 3 * b + i)] = s * s;
            }
        }
        NoiseModel {
            gyro_cov: Matrix3::identity() * gyro_std * gyro_std,
            accel_cov: Matrix3::identity() * accel_std * accel_std,
            feature_cov: Matrix2::identity() * feature_std * feature_std,
            prior_cov,
            gyro_walk_psd: Matrix3::zeros(),
            accel_walk_psd: Matrix3::zeros(),
            imu_rate,
        }
    }

    /// Transposed Cholesky weights for every residual family.
    pub fn weights(&self) -> Result<WeightSet> {
        Ok(WeightSet {
            gyro_wt: weight_transpose(&self.gyro_cov)?,
            accel_wt: weight_transpose(&self.accel_cov)?,
            feature_wt: weight_transpose(&self.feature_cov)?,
            prior_wt: weight_transpose(&self.prior_cov)?,
        })
    }
}

/// Cached `W^T` factors with `R^{-1} = W W^T`.
#[derive(Debug, Clone)]
pub struct WeightSet {
    pub gyro_wt: Matrix3<f64>,
    pub accel_wt: Matrix3<f64>,
    pub feature_wt: Matrix2<f64>,
    pub prior_wt: SMatrix<f64, 15, 15>,
}

/// `W^T` where `W` is the lower Cholesky factor of `cov^{-1}`, so that
/// `|W^T r|^2 = r^T cov^{-1} r`.
pub fn weight_transpose<const N: usize>(cov: &SMatrix<f64, N, N>) -> Result<SMatrix<f64, N, N>> {
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(format!("{N}x{N} covariance")))?;
    let inv = chol.inverse();
    let w = inv
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(format!("{N}x{N} inverse covariance")))?;
    Ok(w.l().transpose())
}

/// `W^T r`.
pub fn apply_weight<const N: usize>(
    residual: &SVector<f64, N>,
    weight_t: &SMatrix<f64, N, N>,
) -> SVector<f64, N> {
    weight_t * residual
}

/// Gyro residual from evaluated kinematics: `omega_meas - 2 vec(q* q_dot) - bg`.
/// `q` is the raw polynomial quaternion and `q_dot` its derivative in 1/s.
pub fn gyro_residual_at(
    q: &Quat,
    q_dot: &Quat,
    bg: &Vector3<f64>,
    omega_meas: &Vector3<f64>,
) -> Vector3<f64> {
    omega_meas - (q.conjugate() * *q_dot).vec() * 2.0 - bg
}

/// Accelerometer residual from evaluated kinematics:
/// `f_meas - C_w^b (v_dot - g) - ba`, with `C_w^b` from the normalized
/// quaternion.
pub fn accel_residual_at(
    q: &Quat,
    v_dot: &Vector3<f64>,
    ba: &Vector3<f64>,
    f_meas: &Vector3<f64>,
    gravity: &Vector3<f64>,
) -> Vector3<f64> {
    let world_to_body = q.to_rotation_matrix().transpose();
    f_meas - world_to_body * (v_dot - gravity) - ba
}

/// Camera-frame coordinates of the world point `xw` seen from body pose
/// `(q, p)`: `Y = C_b^c (C_w^b (xw - p)) + p_cb^c`.
pub fn camera_point(
    q: &Quat,
    p: &Vector3<f64>,
    xw: &Vector3<f64>,
    ext: &Extrinsics,
) -> Vector3<f64> {
    let world_to_body = q.to_rotation_matrix().transpose();
    ext.cam_from_body * (world_to_body * (xw - p)) + ext.body_in_cam
}

/// Pinhole residual `Y_{1:2} / Y_3 - xy`, or `None` when the predicted depth
/// is at or below `depth_min` (cheirality failure).
pub fn projection_residual(
    q: &Quat,
    p: &Vector3<f64>,
    xw: &Vector3<f64>,
    xy: &Vector2<f64>,
    ext: &Extrinsics,
    depth_min: f64,
) -> Option<Vector2<f64>> {
    let y = camera_point(q, p, xw, ext);
    if y.z <= depth_min {
        return None;
    }
    Some(Vector2::new(y.x / y.z - xy.x, y.y / y.z - xy.y))
}

/// Gyro residual sampled from a trajectory at `tau`.
pub fn gyro_residual(
    traj: &ChebTrajectory,
    bg: &Vector3<f64>,
    omega_meas: &Vector3<f64>,
    tau: f64,
) -> Result<Vector3<f64>> {
    let q = traj.attitude_at(tau)?;
    let q_dot = traj.attitude_rate_at(tau)?;
    Ok(gyro_residual_at(&q, &q_dot, bg, omega_meas))
}

/// Accelerometer residual sampled from a trajectory at `tau`.
pub fn accel_residual(
    traj: &ChebTrajectory,
    ba: &Vector3<f64>,
    f_meas: &Vector3<f64>,
    ext: &Extrinsics,
    tau: f64,
) -> Result<Vector3<f64>> {
    let q = traj.attitude_at(tau)?;
    let v_dot = traj.acceleration_at(tau)?;
    Ok(accel_residual_at(&q, &v_dot, ba, f_meas, &ext.gravity))
}

/// Reprojection residual for one observation against a trajectory.
pub fn reprojection_residual(
    traj: &ChebTrajectory,
    xw: &Vector3<f64>,
    obs: &FeatureObservation,
    ext: &Extrinsics,
    depth_min: f64,
) -> Result<Option<Vector2<f64>>> {
    let tau = traj.time_map().to_tau(obs.frame_time);
    let q = traj.attitude_at(tau)?;
    let p = traj.position_at(tau)?;
    Ok(projection_residual(&q, &p, xw, &obs.xy, ext, depth_min))
}

/// 15-block prior residual
/// `[2 vec(q(-1)* q_hat); v(-1) - v_hat; p(-1) - p_hat; ba - ba_hat; bg - bg_hat]`,
/// with `q(-1)` normalized before the product.
pub fn prior_residual(
    traj: &ChebTrajectory,
    ba: &Vector3<f64>,
    bg: &Vector3<f64>,
    prior: &PriorState,
) -> Result<SVector<f64, 15>> {
    let q = traj.attitude_at(-1.0)?.normalized();
    let att = (q.conjugate() * prior.q).vec() * 2.0;
    let dv = traj.velocity_at(-1.0)? - prior.v;
    let dp = traj.position_at(-1.0)? - prior.p;
    let dba = ba - prior.ba;
    let dbg = bg - prior.bg;
    let mut r = SVector::<f64, 15>::zeros();
    r.fixed_rows_mut::<3>(0).copy_from(&att);
    r.fixed_rows_mut::<3>(3).copy_from(&dv);
    r.fixed_rows_mut::<3>(6).copy_from(&dp);
    r.fixed_rows_mut::<3>(9).copy_from(&dba);
    r.fixed_rows_mut::<3>(12).copy_from(&dbg);
    Ok(r)
}

/// Checks strictly increasing, nominally equispaced timestamps; returns the
/// nominal sample period. Deviations beyond `tol` seconds from the nominal
/// grid are rejected.
pub fn validate_imu_spacing(samples: &[ImuSample], tol: f64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InvalidParameter("need at least two IMU samples".into()));
    }
    let n = samples.len();
    let dt = (samples[n - 1].t - samples[0].t) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter("IMU timestamps must increase".into()));
    }
    let mut max_dev: f64 = 0.0;
    for (i, s) in samples.iter().enumerate() {
        if i > 0 && s.t <= samples[i - 1].t {
            return Err(Error::InvalidParameter(format!(
                "IMU timestamps not strictly increasing at index {i}"
            )));
        }
        max_dev = max_dev.max((s.t - (samples[0].t + i as f64 * dt)).abs());
    }
    if max_dev > tol {
        return Err(Error::NonEquispacedSamples { max_dev });
    }
    Ok(dt)
}
