//! Run configuration: defaults, JSON overrides, and resolution to concrete
//! models.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::geometry::RobotGeometry;
use crate::sim::{BendNoiseModel, ImuNoiseModel};
use crate::tuner::TunerSpec;

/// Noise-model file: both sensor models in one JSON document.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub imu: ImuNoiseModel,
    pub bend: BendNoiseModel,
}

impl NoiseConfig {
    pub fn default_models() -> Self {
        Self {
            imu: ImuNoiseModel::default_model(),
            bend: BendNoiseModel::default_model(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: NoiseConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.imu.validate()?;
        cfg.bend.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

fn default_seed() -> u64 {
    7
}
fn default_rig_seed() -> u64 {
    42
}
fn default_sample_rate() -> f64 {
    10.0
}
fn default_train_duration() -> f64 {
    1200.0
}
fn default_scenario_duration() -> f64 {
    900.0
}
fn default_drift_window() -> usize {
    crate::drift::DEFAULT_WINDOW
}
fn default_drift_threshold_deg() -> f64 {
    0.5
}

/// Experiment configuration. Every field has a default, so an empty JSON
/// object is a valid config; CLI flags override file values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Robot geometry JSON; the built-in six-segment arm when absent.
    #[serde(default)]
    pub geometry_file: Option<PathBuf>,
    /// Noise-model JSON; calibrated defaults when absent.
    #[serde(default)]
    pub noise_file: Option<PathBuf>,
    /// Master seed for trajectories and sensor noise.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Seed of the simulated sensing hardware (voltage curves). Kept apart
    /// from the master seed so calibration transfers across runs.
    #[serde(default = "default_rig_seed")]
    pub rig_seed: u64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate_hz: f64,
    #[serde(default = "default_train_duration")]
    pub train_duration_s: f64,
    #[serde(default = "default_scenario_duration")]
    pub scenario_duration_s: f64,
    #[serde(default = "default_drift_window")]
    pub drift_window: usize,
    #[serde(default = "default_drift_threshold_deg")]
    pub drift_threshold_deg: f64,
    #[serde(default)]
    pub tuner: TunerSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Resolve file references into concrete models.
    pub fn resolve(&self) -> Result<(RobotGeometry, NoiseConfig)> {
        let geoms = match &self.geometry_file {
            Some(p) => RobotGeometry::load(p)?,
            None => RobotGeometry::default_arm(),
        };
        let noise = match &self.noise_file {
            Some(p) => NoiseConfig::load(p)?,
            None => NoiseConfig::default_models(),
        };
        Ok((geoms, noise))
    }

    pub fn drift_threshold_rad(&self) -> f64 {
        self.drift_threshold_deg.to_radians()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_is_a_full_config() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.rig_seed, 42);
        assert_eq!(cfg.drift_window, 100);
        let (geoms, noise) = cfg.resolve().unwrap();
        assert_eq!(geoms.len(), 6);
        assert!(noise.bend.voltage_noise_std > 0.0);
    }

    #[test]
    fn partial_override_keeps_other_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 99, "scenario_duration_s": 60}"#).unwrap();
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.scenario_duration_s, 60.0);
        assert_eq!(cfg.sample_rate_hz, 10.0);
    }
}
