//! Voltage-to-orientation calibration for the bend sensors.
//!
//! Each sensing segment carries two flex sensors in parallel; their divided
//! voltages vary monotonically with the segment bend angle. Calibration fits
//! a least-squares quadratic `theta = a*v^2 + b*v + c` over swept samples
//! and rejects fits that are not strictly monotonic over the sampled range
//! (the physical map is bijective). At run time the pair of voltages is
//! averaged first and the quadratic evaluated at the mean; voltages outside
//! the calibrated range are clamped and flagged rather than extrapolated.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

/// Fitted quadratic map from voltage (V) to orientation (rad) with its
/// validity range and residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMap {
    /// Quadratic coefficient (rad/V^2).
    pub a: f64,
    /// Linear coefficient (rad/V).
    pub b: f64,
    /// Constant term (rad).
    pub c: f64,
    /// Lower edge of the calibrated voltage range (V).
    pub v_min: f64,
    /// Upper edge of the calibrated voltage range (V).
    pub v_max: f64,
    /// Residual RMSE of the fit (rad).
    pub fit_rmse: f64,
}

impl CalibrationMap {
    /// Evaluate the quadratic at a voltage without range handling.
    pub fn eval(&self, v: f64) -> f64 {
        (self.a * v + self.b) * v + self.c
    }

    /// Derivative of the map at a voltage (rad/V).
    pub fn slope(&self, v: f64) -> f64 {
        2.0 * self.a * v + self.b
    }

    /// Map a pair of voltages to an orientation. The pair is averaged in
    /// voltage space before evaluation. Returns the orientation and whether
    /// the mean voltage had to be clamped into the calibrated range.
    pub fn voltage_to_orientation(&self, v_pair: (f64, f64)) -> (f64, bool) {
        let mean = 0.5 * (v_pair.0 + v_pair.1);
        let clamped = mean < self.v_min || mean > self.v_max;
        let v = mean.clamp(self.v_min, self.v_max);
        (self.eval(v), clamped)
    }
}

/// Least-squares quadratic fit of orientation on voltage.
///
/// Needs at least three samples spanning a non-degenerate voltage range and
/// fails if the fitted map is not strictly monotonic over that range.
pub fn fit_calibration(samples: &[(f64, f64)]) -> Result<CalibrationMap> {
    if samples.len() < 3 {
        return Err(Error::Calibration(format!(
            "need at least 3 samples, got {}",
            samples.len()
        )));
    }
    for &(v, theta) in samples {
        if !(v.is_finite() && theta.is_finite()) {
            return Err(Error::NonFinite {
                context: "calibration sample",
            });
        }
    }
    let v_min = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let v_max = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    if v_max - v_min < 1e-9 {
        return Err(Error::Calibration(
            "degenerate design: all voltages equal".into(),
        ));
    }

    // Normal equations on the (v^2, v, 1) basis. Centering the voltages
    // keeps the 3x3 system well conditioned for ADC-scale inputs.
    let v0 = 0.5 * (v_min + v_max);
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for &(v, theta) in samples {
        let u = v - v0;
        let row = Vector3::new(u * u, u, 1.0);
        ata += row * row.transpose();
        atb += row * theta;
    }
    let coeffs = ata.lu().solve(&atb).ok_or_else(|| {
        Error::Calibration("rank-deficient design matrix".into())
    })?;
    // Expand theta = p*(v-v0)^2 + q*(v-v0) + r back to raw-voltage form.
    let (p, q, r) = (coeffs[0], coeffs[1], coeffs[2]);
    let a = p;
    let b = q - 2.0 * p * v0;
    let c = p * v0 * v0 - q * v0 + r;

    let mut sq_sum = 0.0;
    for &(v, theta) in samples {
        let resid = (a * v + b) * v + c - theta;
        sq_sum += resid * resid;
    }
    let fit_rmse = (sq_sum / samples.len() as f64).sqrt();

    let map = CalibrationMap {
        a,
        b,
        c,
        v_min,
        v_max,
        fit_rmse,
    };
    // The derivative 2a*v + b is linear in v, so checking its sign at the
    // range endpoints covers the whole interval.
    let d_lo = map.slope(v_min);
    let d_hi = map.slope(v_max);
    if d_lo * d_hi <= 0.0 {
        return Err(Error::Calibration(
            "fitted map is not monotonic over the sampled range".into(),
        ));
    }
    Ok(map)
}

/// Calibration maps for the whole arm, one per sensing segment (each map is
/// fit on the pair-mean voltage of that segment's two sensors).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    pub maps: Vec<CalibrationMap>,
}

impl CalibrationSet {
    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    /// Map every segment's voltage pair to an orientation.
    pub fn orientations(&self, pairs: &[(f64, f64)]) -> Result<(Vec<f64>, Vec<bool>)> {
        if pairs.len() != self.maps.len() {
            return Err(Error::LengthMismatch {
                expected: self.maps.len(),
                got: pairs.len(),
            });
        }
        let mut thetas = Vec::with_capacity(pairs.len());
        let mut clamped = Vec::with_capacity(pairs.len());
        for (map, &pair) in self.maps.iter().zip(pairs) {
            let (theta, cl) = map.voltage_to_orientation(pair);
            thetas.push(theta);
            clamped.push(cl);
        }
        Ok((thetas, clamped))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
