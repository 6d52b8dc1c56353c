//! End-to-end experiment orchestration.
//!
//! `reproduce` is self-contained: it generates a training log, fits the
//! bend-sensor calibration on it, tunes the filter parameters, runs the
//! three validation scenarios, evaluates all four estimator variants, and
//! writes every artifact (logs, configs, result tables, plot data, and a
//! drift-correction demonstration trace) into an output directory. All
//! outputs are pure functions of the configuration, so two invocations with
//! the same config produce byte-identical directories.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};

use crate::calibration::{fit_calibration, CalibrationSet};
use crate::config::{NoiseConfig, RunConfig};
use crate::drift::DriftCorrector;
use crate::error::{Error, Result};
use crate::eval::{compare_methods, ComparisonTable};
use crate::fusion::FusionConfigs;
use crate::geometry::RobotGeometry;
use crate::logio::{
    save_run, write_drift_trace_csv, write_plot_data_csv, write_results_csv, DriftTraceSample,
};
use crate::rng::{channel_rng, derive_seed};
use crate::sim::{
    assemble_run, generate_training_trajectory, run_scenario, ScenarioKind, ScenarioRun,
    ScenarioSpec, SensorRig, TrainingMix,
};
use crate::tuner::{tune, ObjectiveContext, TunerReport};

/// Fit one calibration map per segment from a logged run with ground truth:
/// samples are (pair-mean voltage, true segment angle).
pub fn fit_arm_calibration(run: &ScenarioRun) -> Result<CalibrationSet> {
    let n = run.segment_count();
    if n == 0 {
        return Err(Error::InvalidInput("empty run".into()));
    }
    let maps = (0..n)
        .map(|i| {
            let samples: Vec<(f64, f64)> = run
                .frames
                .iter()
                .zip(&run.gt)
                .map(|(f, g)| (0.5 * (f.bend_a[i] + f.bend_b[i]), g.thetas[i]))
                .collect();
            fit_calibration(&samples)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("calibration"))?;
    Ok(CalibrationSet { maps })
}

/// Generate the training run: calibration sweep plus randomized curvatures.
pub fn training_run(
    config: &RunConfig,
    geoms: &RobotGeometry,
    noise: &NoiseConfig,
    rig: &SensorRig,
) -> Result<ScenarioRun> {
    let spec = ScenarioSpec::new(
        ScenarioKind::Swing,
        config.train_duration_s,
        config.sample_rate_hz,
        derive_seed(config.seed, "train"),
    )?;
    let gt = generate_training_trajectory(&spec, geoms, &TrainingMix::default())?;
    assemble_run(spec, gt, geoms, &noise.imu, &noise.bend, rig)
}

/// Settings of the drift-correction demonstration (the slow-drift endurance
/// trace): one sensing channel swinging periodically while its IMU angle
/// drifts by a fixed ramp, corrected against a noisy bend reference.
#[derive(Debug, Clone, Copy)]
pub struct DriftDemoSpec {
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    /// Total drift accumulated by the end of the run (rad).
    pub total_drift_rad: f64,
    /// Amplitude of the periodic motion (rad).
    pub motion_amplitude_rad: f64,
    pub motion_period_s: f64,
    /// White noise on the IMU channel (rad).
    pub imu_noise_std: f64,
    /// Noise of the bend-derived reference angle (rad).
    pub bend_noise_std: f64,
}

impl Default for DriftDemoSpec {
    fn default() -> Self {
        Self {
            duration_s: 900.0,
            sample_rate_hz: 10.0,
            total_drift_rad: 45.0f64.to_radians(),
            motion_amplitude_rad: 20.0f64.to_radians(),
            motion_period_s: 60.0,
            imu_noise_std: 0.5f64.to_radians(),
            bend_noise_std: 2.0f64.to_radians(),
        }
    }
}

/// Run the drift demonstration; returns the full trace.
pub fn drift_demo(
    spec: &DriftDemoSpec,
    corrector: &mut DriftCorrector,
    seed: u64,
) -> Result<Vec<DriftTraceSample>> {
    let frames = (spec.duration_s * spec.sample_rate_hz).round() as usize;
    let dt = 1.0 / spec.sample_rate_hz;
    let slope = spec.total_drift_rad / spec.duration_s;
    let mut rng = channel_rng(seed, "drift-demo");
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = Vec::with_capacity(frames);
    for k in 0..frames {
        let t = k as f64 * dt;
        let truth = spec.motion_amplitude_rad
            * (2.0 * std::f64::consts::PI * t / spec.motion_period_s).sin();
        let raw = truth + slope * t + spec.imu_noise_std * unit.sample(&mut rng);
        let bend = truth + spec.bend_noise_std * unit.sample(&mut rng);
        let corrected = corrector.update(raw, bend)?;
        out.push(DriftTraceSample {
            t,
            truth,
            raw_imu: raw,
            corrected_imu: corrected,
            bend_reference: bend,
        });
    }
    Ok(out)
}

/// Provenance manifest written next to every output set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub rig_seed: u64,
    pub config_sha256: String,
    pub outputs: Vec<String>,
}

pub fn config_hash(config: &RunConfig) -> Result<String> {
    let text = serde_json::to_string(config)?;
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn write_manifest(
    dir: &Path,
    config: &RunConfig,
    outputs: &[PathBuf],
) -> Result<PathBuf> {
    let mut names: Vec<String> = outputs
        .iter()
        .map(|p| {
            p.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
        .collect();
    names.sort();
    let manifest = Manifest {
        tool: "proprio".to_string(),
        version: crate::VERSION.to_string(),
        seed: config.seed,
        rig_seed: config.rig_seed,
        config_sha256: config_hash(config)?,
        outputs: names,
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// Everything `reproduce` produced, for programmatic use.
pub struct ReproduceReport {
    pub table: ComparisonTable,
    pub tuner_report: TunerReport,
    pub configs: FusionConfigs,
    pub cal: CalibrationSet,
    pub out_dir: PathBuf,
}

/// Self-contained end-to-end experiment. See the module docs for the stage
/// list; every stage failure is tagged with its stage name.
pub fn reproduce(config: &RunConfig, out_dir: &Path) -> Result<ReproduceReport> {
    std::fs::create_dir_all(out_dir)?;
    let mut outputs: Vec<PathBuf> = Vec::new();

    let (geoms, noise) = config.resolve().map_err(|e| e.in_stage("config"))?;
    let rig = SensorRig::generate(config.rig_seed, geoms.len());

    let geometry_path = out_dir.join("geometry.json");
    geoms.save(&geometry_path)?;
    outputs.push(geometry_path);
    let noise_path = out_dir.join("noise.json");
    noise.save(&noise_path)?;
    outputs.push(noise_path);

    // Training: one log feeds both the calibration fit and the tuner.
    let train = training_run(config, &geoms, &noise, &rig).map_err(|e| e.in_stage("simulate"))?;
    let (s, g, m) = save_run(out_dir, "train", &train, config.rig_seed, &noise.imu, &noise.bend)?;
    outputs.extend([s, g, m]);

    let cal = fit_arm_calibration(&train)?;
    let cal_path = out_dir.join("calibration.json");
    cal.save(&cal_path)?;
    outputs.push(cal_path);

    let corrector = DriftCorrector::new(config.drift_window, config.drift_threshold_rad())?;
    let initial = FusionConfigs::from_noise_models(
        &geoms,
        &cal,
        &noise.imu,
        &noise.bend,
        config.drift_window as f64 / config.sample_rate_hz,
    );
    let ctx = ObjectiveContext {
        geoms: &geoms,
        cal: &cal,
        corrector: &corrector,
        run: &train,
    };
    let tuner_report = tune(&config.tuner, &initial, &ctx).map_err(|e| e.in_stage("tune"))?;
    let configs = tuner_report
        .configs
        .clone()
        .expect("tuner always returns configs");
    let (p1, p2) = configs.save(out_dir)?;
    outputs.extend([p1, p2]);
    let report_path = out_dir.join("tuner_report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&tuner_report)?)?;
    outputs.push(report_path);

    // Validation scenarios share the master seed: the drift realization is
    // identical across scenarios, so cross-scenario comparisons isolate the
    // scenario effects.
    let mut runs = Vec::new();
    for kind in ScenarioKind::ALL {
        let spec = ScenarioSpec::new(
            kind,
            config.scenario_duration_s,
            config.sample_rate_hz,
            config.seed,
        )?;
        let run = run_scenario(&spec, &geoms, &noise.imu, &noise.bend, &rig)
            .map_err(|e| e.in_stage("simulate"))?;
        let base = format!("scenario_{kind}");
        let (s, g, m) = save_run(out_dir, &base, &run, config.rig_seed, &noise.imu, &noise.bend)?;
        outputs.extend([s, g, m]);
        runs.push(run);
    }

    let table = compare_methods(&runs, &geoms, &cal, &configs, &corrector)
        .map_err(|e| e.in_stage("evaluate"))?;
    let results_csv = out_dir.join("results.csv");
    write_results_csv(&results_csv, &table)?;
    outputs.push(results_csv);
    let results_json = out_dir.join("results.json");
    std::fs::write(&results_json, serde_json::to_string_pretty(&table)?)?;
    outputs.push(results_json);
    let plot_csv = out_dir.join("plot_data.csv");
    write_plot_data_csv(&plot_csv, &table)?;
    outputs.push(plot_csv);

    // Drift-correction demonstration over the endurance horizon.
    let mut demo_corrector =
        DriftCorrector::new(config.drift_window, config.drift_threshold_rad())?;
    let trace = drift_demo(
        &DriftDemoSpec::default(),
        &mut demo_corrector,
        derive_seed(config.seed, "drift-demo"),
    )?;
    let trace_path = out_dir.join("drift_trace.csv");
    write_drift_trace_csv(&trace_path, &trace)?;
    outputs.push(trace_path);

    write_manifest(out_dir, config, &outputs)?;

    Ok(ReproduceReport {
        table,
        tuner_report,
        configs,
        cal,
        out_dir: out_dir.to_path_buf(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_demo_raw_error_dwarfs_corrected_error() {
        let spec = DriftDemoSpec::default();
        let mut corr = DriftCorrector::with_defaults();
        let trace = drift_demo(&spec, &mut corr, 1).unwrap();
        let last = trace.last().unwrap();
        let raw_err = (last.raw_imu - last.truth).abs();
        let corrected_err = (last.corrected_imu - last.truth).abs();
        assert!(raw_err.to_degrees() > 30.0);
        assert!(raw_err >= 10.0 * corrected_err,
            "raw {} deg vs corrected {} deg",
            raw_err.to_degrees(),
            corrected_err.to_degrees()
        );
    }

    #[test]
    fn calibration_fit_from_training_run_is_accurate() {
        let config = RunConfig {
            train_duration_s: 120.0,
            ..RunConfig::default()
        };
        let (geoms, mut noise) = config.resolve().unwrap();
        noise.imu = crate::sim::ImuNoiseModel::zero();
        noise.bend = crate::sim::BendNoiseModel::zero();
        let rig = SensorRig::generate(config.rig_seed, geoms.len());
        let train = training_run(&config, &geoms, &noise, &rig).unwrap();
        let cal = fit_arm_calibration(&train).unwrap();
        assert_eq!(cal.len(), geoms.len());
        for (map, curve) in cal.maps.iter().zip(&rig.curves) {
            assert!((map.a - curve.a).abs() < 1e-6);
            assert!((map.b - curve.b).abs() < 1e-6);
            assert!((map.c - curve.c).abs() < 1e-6);
            assert!(map.fit_rmse < 1e-9);
        }
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        b.seed = 8;
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
    }
}
