//! Online IMU drift correction against the bend-sensor reference.
//!
//! The IMU angle drifts slowly; the bend-derived angle is noisy but
//! unbiased. The corrector keeps moving averages of both streams and latches
//! their difference as the current drift offset, but only when the
//! difference moves by more than a threshold since the last latch.
//! Subtracting a latched (piecewise-constant) offset instead of the
//! instantaneous average difference leaves the IMU's transient response
//! untouched between latches: within any interval with no threshold
//! crossing, corrected minus raw is constant.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Default moving-average window (samples).
pub const DEFAULT_WINDOW: usize = 100;
/// Default correction threshold (rad): half a degree.
pub const DEFAULT_THRESHOLD: f64 = 0.5 * std::f64::consts::PI / 180.0;

/// Moving-average drift corrector for one IMU channel.
#[derive(Debug, Clone)]
pub struct DriftCorrector {
    window_size: usize,
    threshold: f64,
    imu_buf: VecDeque<f64>,
    bend_buf: VecDeque<f64>,
    imu_sum: f64,
    bend_sum: f64,
    accumulated_offset: f64,
}

impl DriftCorrector {
    pub fn new(window_size: usize, threshold: f64) -> Result<Self> {
        if window_size == 0 {
            return Err(Error::InvalidInput("window size must be >= 1".into()));
        }
        if !(threshold.is_finite() && threshold >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "threshold must be non-negative, got {threshold}"
            )));
        }
        Ok(Self {
            window_size,
            threshold,
            imu_buf: VecDeque::with_capacity(window_size),
            bend_buf: VecDeque::with_capacity(window_size),
            imu_sum: 0.0,
            bend_sum: 0.0,
            accumulated_offset: 0.0,
        })
    }

    pub fn with_defaults() -> Self {
        Self::new(DEFAULT_WINDOW, DEFAULT_THRESHOLD).expect("default parameters are valid")
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Offset currently subtracted from the IMU stream.
    pub fn accumulated_offset(&self) -> f64 {
        self.accumulated_offset
    }

    /// Feed one sample pair; returns the drift-corrected IMU angle.
    ///
    /// Before the window first fills, the means run over the samples seen so
    /// far, so correction is active from the first sample.
    pub fn update(&mut self, theta_imu: f64, theta_bend: f64) -> Result<f64> {
        if !(theta_imu.is_finite() && theta_bend.is_finite()) {
            return Err(Error::NonFinite {
                context: "drift corrector input",
            });
        }
        if self.imu_buf.len() == self.window_size {
            self.imu_sum -= self.imu_buf.pop_front().expect("buffer non-empty");
            self.bend_sum -= self.bend_buf.pop_front().expect("buffer non-empty");
        }
        self.imu_buf.push_back(theta_imu);
        self.bend_buf.push_back(theta_bend);
        self.imu_sum += theta_imu;
        self.bend_sum += theta_bend;

        let n = self.imu_buf.len() as f64;
        let offset = self.imu_sum / n - self.bend_sum / n;
        if (offset - self.accumulated_offset).abs() > self.threshold {
            self.accumulated_offset = offset;
        }
        Ok(theta_imu - self.accumulated_offset)
    }

    /// Empty the buffers and discard the accumulated correction.
    pub fn reset(&mut self) {
        self.imu_buf.clear();
        self.bend_buf.clear();
        self.imu_sum = 0.0;
        self.bend_sum = 0.0;
        self.accumulated_offset = 0.0;
    }
}
