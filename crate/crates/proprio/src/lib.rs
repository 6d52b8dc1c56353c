//! Proprioception toolkit for planar continuum robots.
//!
//! The crate estimates the shape of a planar soft arm from two kinds of
//! off-the-shelf sensors: resistive bend sensors (noisy and hysteretic, but
//! drift-free) and IMU yaw readings (precise over short horizons, but
//! drifting). The estimation pipeline is:
//!
//! 1. [`calibration`] maps paired bend-sensor voltages to segment angles
//!    through a fitted quadratic.
//! 2. [`drift`] anchors the drifting IMU angles to the bend-sensor reference
//!    with a thresholded moving-average corrector.
//! 3. [`kinematics`] maps per-segment angles to endpoint positions with a
//!    constant-curvature arc model joined by rigid offsets.
//! 4. [`fusion`] runs two decoupled linear Kalman filters, one over the
//!    segment angles and one over the local endpoint coordinates, then
//!    composes the fused estimates into the world frame.
//! 5. [`tuner`] optimizes the filter noise parameters offline by
//!    finite-difference gradient descent on end-metric RMSE.
//! 6. [`eval`] computes per-frame Euclidean errors, RMSE, quartiles, and
//!    75th-percentile radii, and compares the four estimator variants
//!    (Fusion, Bend, IMU_C, IMU_O) on identical logs.
//!
//! Ground truth comes from [`sim`], a deterministic, seeded simulator that
//! generates swing, external-force, and obstacle-contact trajectories and
//! synthesizes realistic sensor logs (white noise, random-walk and ramp
//! drift, hysteresis, quantization, saturation).
//!
//! The [`pipeline`] module wires everything into a self-contained,
//! byte-reproducible experiment; the `proprio` binary exposes it as a CLI.

pub mod calibration;
pub mod config;
pub mod drift;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod kalman;
pub mod kinematics;
pub mod logio;
pub mod pipeline;
pub mod rng;
pub mod sim;
pub mod tuner;

pub use error::{Error, Result};
pub use geometry::{BendAngle, PlanarPoint, PlanarRotation, RobotGeometry, SegmentGeometry};

/// Crate version string recorded in output manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
