//! Continuous-time visual-inertial state estimation on Chebyshev polynomial
//! trajectories.
//!
//! Attitude and velocity over a time window are represented as Chebyshev
//! expansions; position follows by analytic integration of the velocity
//! polynomial. The expansion coefficients, constant IMU biases and 3D
//! landmarks are estimated jointly by constrained nonlinear least squares
//! against raw gyroscope, accelerometer and monocular reprojection
//! measurements, with unit-quaternion constraints enforced at collocation
//! points via an augmented Lagrangian wrapped around Levenberg-Marquardt.
//!
//! A discrete-time IMU-preintegration estimator over the same measurements
//! serves as the comparison baseline, and the crate ships simulation
//! generators, EuRoC ASL dataset loading, error metrics and a Monte-Carlo
//! harness to benchmark the two.

pub mod cheb;
pub mod config;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod measurement;
pub mod metrics;
pub mod preint;
pub mod sim;
pub mod solver;
pub mod trajectory;

pub use error::{Error, Result};
