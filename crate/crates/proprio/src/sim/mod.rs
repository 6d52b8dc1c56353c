//! Deterministic simulator: ground-truth trajectories for the three
//! validation scenarios and synthetic sensor logs derived from them.
//!
//! The simulator stands in for a physical rig: it produces the true arm
//! configuration over time and then corrupts it the way the real sensors
//! would. IMU yaw gets white noise, a slow ramp plus random-walk drift, and
//! extra noise proportional to tip acceleration; bend voltages get white
//! noise, direction-dependent hysteresis, ADC quantization, and saturation
//! outside the sensor's physical range. Everything is keyed off named RNG
//! channels of a master seed, so identical `(spec, seed)` inputs give
//! byte-identical logs and different noise sources never share a stream.

mod sensors;
mod trajectory;

pub use sensors::{synthesize_bend, synthesize_imu, BendSynthesis};
pub use trajectory::{generate_trajectory, generate_training_trajectory, TrainingMix};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::RobotGeometry;
use crate::rng::channel_rng;
use rand::Rng;

/// ADC reference voltage (V); synthesized voltages stay within `[0, VREF]`.
pub const VREF: f64 = 3.3;

/// Validation scenario kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    /// Free lateral swing, no external load.
    #[serde(rename = "I")]
    Swing,
    /// Swing plus randomized external force impulses.
    #[serde(rename = "II")]
    ExternalForce,
    /// Swing against a fixed obstacle: one segment's bend clamps on contact
    /// while distal segments wrap, and the contacted arc bends non-uniformly.
    #[serde(rename = "III")]
    ObstacleContact,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [
        ScenarioKind::Swing,
        ScenarioKind::ExternalForce,
        ScenarioKind::ObstacleContact,
    ];

    /// Row label used in result tables.
    pub fn label(&self) -> &'static str {
        match self {
            ScenarioKind::Swing => "S_I",
            ScenarioKind::ExternalForce => "S_II",
            ScenarioKind::ObstacleContact => "S_III",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScenarioKind::Swing => "I",
            ScenarioKind::ExternalForce => "II",
            ScenarioKind::ObstacleContact => "III",
        };
        f.write_str(s)
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(ScenarioKind::Swing),
            "II" | "2" => Ok(ScenarioKind::ExternalForce),
            "III" | "3" => Ok(ScenarioKind::ObstacleContact),
            other => Err(Error::UnknownScenario(other.to_string())),
        }
    }
}

/// One scenario request: what to simulate, for how long, at what rate, and
/// under which master seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, duration_s: f64, sample_rate_hz: f64, seed: u64) -> Result<Self> {
        if !(duration_s.is_finite() && duration_s > 0.0) {
            return Err(Error::InvalidInput(format!(
                "duration must be positive, got {duration_s}"
            )));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(Self {
            kind,
            duration_s,
            sample_rate_hz,
            seed,
        })
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }
}

/// IMU error model. Yaw = truth + ramp + random walk + white noise + a term
/// proportional to tip acceleration (transients shake the onboard filter).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuNoiseModel {
    /// White yaw noise std (rad).
    pub yaw_white_noise_std: f64,
    /// Random-walk bias intensity (rad/sqrt(s)).
    pub drift_rate_std: f64,
    /// Std of the per-run constant drift slope (rad/s). Dominates the drift
    /// budget: real yaw drift is trend-like rather than a violent walk.
    pub drift_ramp_rate_std: f64,
    /// Extra yaw noise std per unit tip acceleration (rad per mm/s^2).
    pub acceleration_spike_gain: f64,
}

impl ImuNoiseModel {
    /// Calibrated so the median magnitude of accumulated drift after 900 s
    /// is about 45 degrees, split between the ramp (dominant) and the walk.
    pub fn default_model() -> Self {
        Self {
            yaw_white_noise_std: 0.8f64.to_radians(),
            drift_rate_std: 0.0035,
            drift_ramp_rate_std: 0.0012887,
            acceleration_spike_gain: 2.0e-5,
        }
    }

    pub fn zero() -> Self {
        Self {
            yaw_white_noise_std: 0.0,
            drift_rate_std: 0.0,
            drift_ramp_rate_std: 0.0,
            acceleration_spike_gain: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.yaw_white_noise_std,
            self.drift_rate_std,
            self.drift_ramp_rate_std,
            self.acceleration_spike_gain,
        ];
        if fields.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(
                "imu noise parameters must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Bend-sensor error model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BendNoiseModel {
    /// White voltage noise std per sensor (V).
    pub voltage_noise_std: f64,
    /// Full hysteresis width (rad): loading and unloading branches read the
    /// same voltage at angles this far apart.
    pub hysteresis_width: f64,
    /// ADC quantization step (V); zero disables quantization.
    pub quantization_step: f64,
}

impl BendNoiseModel {
    /// Defaults sized so the pair-averaged orientation noise lands near
    /// 1.2 degrees through a nominal calibration slope, with a small
    /// direction-dependent hysteresis band.
    pub fn default_model() -> Self {
        Self {
            voltage_noise_std: 0.037,
            hysteresis_width: 0.3f64.to_radians(),
            quantization_step: VREF / 1023.0,
        }
    }

    pub fn zero() -> Self {
        Self {
            voltage_noise_std: 0.0,
            hysteresis_width: 0.0,
            quantization_step: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.voltage_noise_std,
            self.hysteresis_width,
            self.quantization_step,
        ];
        if fields.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(
                "bend noise parameters must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// True voltage curve of one bend-sensor pair: orientation is an exact
/// quadratic in voltage, `theta(v) = a*v^2 + b*v + c`, strictly increasing
/// over the physical range. Both sensors of a pair share the curve and
/// differ only in their noise draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorCurve {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl SensorCurve {
    pub fn orientation(&self, v: f64) -> f64 {
        (self.a * v + self.b) * v + self.c
    }

    /// Invert the curve on its increasing branch.
    pub fn voltage_for(&self, theta: f64) -> f64 {
        if self.a.abs() < 1e-12 {
            return (theta - self.c) / self.b;
        }
        let disc = self.b * self.b - 4.0 * self.a * (self.c - theta);
        (-self.b + disc.max(0.0).sqrt()) / (2.0 * self.a)
    }
}

/// The physical sensing hardware of one arm: one voltage curve per segment
/// pair plus the angular range the sensors can physically follow. Generated
/// from a dedicated rig seed so calibration carries across scenario seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorRig {
    pub curves: Vec<SensorCurve>,
    /// Physical sensing limit per segment (rad); bends beyond it saturate.
    pub theta_phys_max: f64,
}

impl SensorRig {
    pub fn generate(rig_seed: u64, segments: usize) -> Self {
        let mut rng = channel_rng(rig_seed, "rig");
        let curves = (0..segments)
            .map(|_| {
                let a: f64 = rng.gen_range(0.03..0.07);
                let b: f64 = rng.gen_range(0.72..0.88);
                let v0: f64 = rng.gen_range(2.05..2.35);
                SensorCurve {
                    a,
                    b,
                    c: -(a * v0 * v0 + b * v0),
                }
            })
            .collect();
        Self {
            curves,
            theta_phys_max: 12.0f64.to_radians(),
        }
    }
}

/// One ground-truth sample: true per-segment bend angles and the true world
/// positions of every sensing point. When `pcc_violation` is set the arm's
/// real shape departs from the uniform-curvature model, so `world_points`
/// are not reproducible from `thetas` alone.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthFrame {
    pub t: f64,
    pub thetas: Vec<f64>,
    pub world_points: Vec<crate::geometry::PlanarPoint>,
    pub pcc_violation: bool,
}

/// One synthesized sensor sample: per-segment IMU yaw plus the two bend
/// voltages of each segment pair. `saturated` marks segments whose true bend
/// exceeded the sensors' physical range this frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorFrame {
    pub t: f64,
    pub imu_yaw: Vec<f64>,
    pub bend_a: Vec<f64>,
    pub bend_b: Vec<f64>,
    pub saturated: Vec<bool>,
}

/// Summary of simulation events, written to the sidecar metadata file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimEvents {
    /// Frames (per segment) in which the bend sensors saturated.
    pub saturation_counts: Vec<usize>,
    /// Time intervals during which the true shape violated the
    /// uniform-curvature assumption.
    pub violation_intervals: Vec<(f64, f64)>,
}

/// A complete simulated run: the spec it came from, the ground truth, the
/// sensor log generated from it, and the event summary.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub spec: ScenarioSpec,
    pub gt: Vec<GroundTruthFrame>,
    pub frames: Vec<SensorFrame>,
    pub events: SimEvents,
}

impl ScenarioRun {
    pub fn segment_count(&self) -> usize {
        self.gt.first().map(|f| f.thetas.len()).unwrap_or(0)
    }
}

/// Generate ground truth for a scenario and synthesize its sensor log.
pub fn run_scenario(
    spec: &ScenarioSpec,
    geoms: &RobotGeometry,
    imu_model: &ImuNoiseModel,
    bend_model: &BendNoiseModel,
    rig: &SensorRig,
) -> Result<ScenarioRun> {
    imu_model.validate()?;
    bend_model.validate()?;
    let gt = generate_trajectory(spec, geoms)?;
    assemble_run(*spec, gt, geoms, imu_model, bend_model, rig)
}

/// Synthesize sensors over an arbitrary ground-truth trajectory (used for
/// the training/calibration log as well as the scenario runs).
pub fn assemble_run(
    spec: ScenarioSpec,
    gt: Vec<GroundTruthFrame>,
    geoms: &RobotGeometry,
    imu_model: &ImuNoiseModel,
    bend_model: &BendNoiseModel,
    rig: &SensorRig,
) -> Result<ScenarioRun> {
    if rig.curves.len() != geoms.len() {
        return Err(Error::LengthMismatch {
            expected: geoms.len(),
            got: rig.curves.len(),
        });
    }
    let imu = synthesize_imu(&gt, imu_model, spec.seed)?;
    let BendSynthesis {
        bend_a,
        bend_b,
        saturated,
    } = synthesize_bend(&gt, bend_model, rig, spec.seed)?;

    let n = geoms.len();
    let mut frames = Vec::with_capacity(gt.len());
    let mut saturation_counts = vec![0usize; n];
    for (k, g) in gt.iter().enumerate() {
        for (i, &s) in saturated[k].iter().enumerate() {
            if s {
                saturation_counts[i] += 1;
            }
        }
        frames.push(SensorFrame {
            t: g.t,
            imu_yaw: imu[k].clone(),
            bend_a: bend_a[k].clone(),
            bend_b: bend_b[k].clone(),
            saturated: saturated[k].clone(),
        });
    }

    let mut violation_intervals = Vec::new();
    let mut open: Option<f64> = None;
    for g in &gt {
        match (g.pcc_violation, open) {
            (true, None) => open = Some(g.t),
            (false, Some(start)) => {
                violation_intervals.push((start, g.t));
                open = None;
            }
            _ => {}
        }
    }
    if let (Some(start), Some(last)) = (open, gt.last()) {
        violation_intervals.push((start, last.t));
    }

    Ok(ScenarioRun {
        spec,
        gt,
        frames,
        events: SimEvents {
            saturation_counts,
            violation_intervals,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_kind_parses_labels() {
        assert_eq!("I".parse::<ScenarioKind>().unwrap(), ScenarioKind::Swing);
        assert_eq!("ii".parse::<ScenarioKind>().unwrap(), ScenarioKind::ExternalForce);
        assert_eq!("3".parse::<ScenarioKind>().unwrap(), ScenarioKind::ObstacleContact);
        assert!("IV".parse::<ScenarioKind>().is_err());
    }

    #[test]
    fn spec_validates_inputs() {
        assert!(ScenarioSpec::new(ScenarioKind::Swing, 0.0, 10.0, 1).is_err());
        assert!(ScenarioSpec::new(ScenarioKind::Swing, 10.0, 0.0, 1).is_err());
        let spec = ScenarioSpec::new(ScenarioKind::Swing, 60.0, 100.0, 1).unwrap();
        assert_eq!(spec.frame_count(), 6000);
    }

    #[test]
    fn rig_is_reproducible_and_monotone() {
        let a = SensorRig::generate(42, 6);
        let b = SensorRig::generate(42, 6);
        assert_eq!(a, b);
        let c = SensorRig::generate(43, 6);
        assert_ne!(a, c);
        for curve in &a.curves {
            let lo = curve.voltage_for(-a.theta_phys_max);
            let hi = curve.voltage_for(a.theta_phys_max);
            assert!(lo < hi);
            assert!(lo > 0.5 && hi < VREF - 0.5, "range [{lo}, {hi}]");
            // Round trip through the curve is exact.
            for k in 0..20 {
                let theta = -a.theta_phys_max + 2.0 * a.theta_phys_max * k as f64 / 19.0;
                let v = curve.voltage_for(theta);
                assert!((curve.orientation(v) - theta).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noise_models_reject_negatives() {
        let mut m = ImuNoiseModel::default_model();
        m.drift_rate_std = -1.0;
        assert!(m.validate().is_err());
        let mut b = BendNoiseModel::default_model();
        b.hysteresis_width = f64::NAN;
        assert!(b.validate().is_err());
    }
}
