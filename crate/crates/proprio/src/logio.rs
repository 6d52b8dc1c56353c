//! CSV and JSON persistence for sensor logs, ground truth, estimates, and
//! evaluation results.
//!
//! Sensor logs and ground truth are parallel CSVs plus a JSON sidecar with
//! the run parameters and event summary. Floats are written in shortest
//! round-trip form, so a saved log reloads to exactly the same values and
//! repeated runs with the same seed produce byte-identical files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ComparisonTable;
use crate::fusion::RobotShapeEstimate;
use crate::geometry::PlanarPoint;
use crate::sim::{
    BendNoiseModel, GroundTruthFrame, ImuNoiseModel, ScenarioKind, ScenarioRun, ScenarioSpec,
    SensorFrame, SimEvents,
};

/// Sidecar metadata for one simulated run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub rig_seed: u64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub imu_noise: ImuNoiseModel,
    pub bend_noise: BendNoiseModel,
    pub events: SimEvents,
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn parse_field(field: &str, what: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Log(format!("bad {what}: {field:?}")))
}

/// Write the sensor log CSV: `t, imu_yaw_1..N, bendA_v_1..N, bendB_v_1..N`.
pub fn write_sensor_csv(path: &Path, frames: &[SensorFrame]) -> Result<()> {
    let n = frames
        .first()
        .map(|f| f.imu_yaw.len())
        .ok_or_else(|| Error::InvalidInput("empty sensor log".into()))?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("imu_yaw_{i}")));
    header.extend((1..=n).map(|i| format!("bendA_v_{i}")));
    header.extend((1..=n).map(|i| format!("bendB_v_{i}")));
    w.write_record(&header)?;
    for f in frames {
        let mut rec = vec![fmt(f.t)];
        rec.extend(f.imu_yaw.iter().map(|&v| fmt(v)));
        rec.extend(f.bend_a.iter().map(|&v| fmt(v)));
        rec.extend(f.bend_b.iter().map(|&v| fmt(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Write the ground-truth CSV: `t, theta_1..N, x_1..N, y_1..N`.
pub fn write_gt_csv(path: &Path, gt: &[GroundTruthFrame]) -> Result<()> {
    let n = gt
        .first()
        .map(|f| f.thetas.len())
        .ok_or_else(|| Error::InvalidInput("empty ground truth".into()))?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("theta_{i}")));
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=n).map(|i| format!("y_{i}")));
    w.write_record(&header)?;
    for f in gt {
        let mut rec = vec![fmt(f.t)];
        rec.extend(f.thetas.iter().map(|&v| fmt(v)));
        rec.extend(f.world_points.iter().map(|p| fmt(p.x)));
        rec.extend(f.world_points.iter().map(|p| fmt(p.y)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sensor_csv(path: &Path) -> Result<Vec<SensorFrame>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let cols = headers.len();
    if cols < 4 || (cols - 1) % 3 != 0 {
        return Err(Error::Log(format!(
            "sensor log must have 1 + 3N columns, got {cols}"
        )));
    }
    let n = (cols - 1) / 3;
    let mut frames = Vec::new();
    let mut prev_t = f64::NEG_INFINITY;
    for rec in r.records() {
        let rec = rec?;
        let t = parse_field(&rec[0], "timestamp")?;
        if t <= prev_t {
            return Err(Error::Log(format!(
                "timestamps must be strictly increasing (t = {t})"
            )));
        }
        prev_t = t;
        let grab = |offset: usize| -> Result<Vec<f64>> {
            (0..n)
                .map(|i| parse_field(&rec[1 + offset + i], "sample"))
                .collect()
        };
        frames.push(SensorFrame {
            t,
            imu_yaw: grab(0)?,
            bend_a: grab(n)?,
            bend_b: grab(2 * n)?,
            saturated: vec![false; n],
        });
    }
    if frames.is_empty() {
        return Err(Error::Log("sensor log has no rows".into()));
    }
    Ok(frames)
}

pub fn read_gt_csv(path: &Path) -> Result<Vec<GroundTruthFrame>> {
    let mut r = csv::Reader::from_path(path)?;
    let cols = r.headers()?.len();
    if cols < 4 || (cols - 1) % 3 != 0 {
        return Err(Error::Log(format!(
            "ground-truth log must have 1 + 3N columns, got {cols}"
        )));
    }
    let n = (cols - 1) / 3;
    let mut gt = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let t = parse_field(&rec[0], "timestamp")?;
        let thetas: Vec<f64> = (0..n)
            .map(|i| parse_field(&rec[1 + i], "theta"))
            .collect::<Result<_>>()?;
        let world_points: Vec<PlanarPoint> = (0..n)
            .map(|i| {
                Ok(PlanarPoint::new(
                    parse_field(&rec[1 + n + i], "x")?,
                    parse_field(&rec[1 + 2 * n + i], "y")?,
                ))
            })
            .collect::<Result<_>>()?;
        gt.push(GroundTruthFrame {
            t,
            thetas,
            world_points,
            pcc_violation: false,
        });
    }
    if gt.is_empty() {
        return Err(Error::Log("ground-truth log has no rows".into()));
    }
    Ok(gt)
}

/// Persist a full run as `<base>_sensor.csv`, `<base>_gt.csv`, and
/// `<base>_meta.json`; returns the three paths.
pub fn save_run(
    dir: &Path,
    base: &str,
    run: &ScenarioRun,
    rig_seed: u64,
    imu_noise: &ImuNoiseModel,
    bend_noise: &BendNoiseModel,
) -> Result<(PathBuf, PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let sensor = dir.join(format!("{base}_sensor.csv"));
    let gt = dir.join(format!("{base}_gt.csv"));
    let meta = dir.join(format!("{base}_meta.json"));
    write_sensor_csv(&sensor, &run.frames)?;
    write_gt_csv(&gt, &run.gt)?;
    let metadata = RunMetadata {
        scenario: run.spec.kind,
        seed: run.spec.seed,
        rig_seed,
        duration_s: run.spec.duration_s,
        sample_rate_hz: run.spec.sample_rate_hz,
        imu_noise: *imu_noise,
        bend_noise: *bend_noise,
        events: run.events.clone(),
    };
    std::fs::write(&meta, serde_json::to_string_pretty(&metadata)?)?;
    Ok((sensor, gt, meta))
}

/// Reload a run saved by [`save_run`]. Per-frame saturation flags live only
/// in memory; the sidecar keeps their per-segment counts.
pub fn load_run(sensor: &Path, gt: &Path, meta: &Path) -> Result<(ScenarioRun, RunMetadata)> {
    let metadata: RunMetadata = serde_json::from_str(&std::fs::read_to_string(meta)?)?;
    let frames = read_sensor_csv(sensor)?;
    let gt_frames = read_gt_csv(gt)?;
    if frames.len() != gt_frames.len() {
        return Err(Error::Log(format!(
            "sensor log has {} rows but ground truth has {}",
            frames.len(),
            gt_frames.len()
        )));
    }
    let spec = ScenarioSpec::new(
        metadata.scenario,
        metadata.duration_s,
        metadata.sample_rate_hz,
        metadata.seed,
    )?;
    Ok((
        ScenarioRun {
            spec,
            gt: gt_frames,
            frames,
            events: metadata.events.clone(),
        },
        metadata,
    ))
}

/// Write shape estimates: `t, theta_1..N, x_1..N, y_1..N, clamped_1..N`.
pub fn write_estimates_csv(path: &Path, estimates: &[RobotShapeEstimate]) -> Result<()> {
    let n = estimates
        .first()
        .map(|e| e.thetas.len())
        .ok_or_else(|| Error::InvalidInput("no estimates".into()))?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("theta_{i}")));
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=n).map(|i| format!("y_{i}")));
    header.extend((1..=n).map(|i| format!("clamped_{i}")));
    w.write_record(&header)?;
    for e in estimates {
        let mut rec = vec![fmt(e.t)];
        rec.extend(e.thetas.iter().map(|&v| fmt(v)));
        rec.extend(e.world_points.iter().map(|p| fmt(p.x)));
        rec.extend(e.world_points.iter().map(|p| fmt(p.y)));
        rec.extend(
            e.clamped
                .iter()
                .map(|&c| if c { "1".to_string() } else { "0".to_string() }),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Write the method-comparison table (one row per method and scenario).
pub fn write_results_csv(path: &Path, table: &ComparisonTable) -> Result<()> {
    let points = table
        .rows
        .first()
        .map(|r| r.p75_per_point_mm.len())
        .unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "method".to_string(),
        "scenario".to_string(),
        "rmse_mm".to_string(),
        "rmse_pct".to_string(),
        "q1_mm".to_string(),
        "median_mm".to_string(),
        "q3_mm".to_string(),
        "min_mm".to_string(),
        "max_mm".to_string(),
        "frames".to_string(),
        "skipped".to_string(),
    ];
    header.extend((1..=points).map(|i| format!("p75_point_{i}_mm")));
    w.write_record(&header)?;
    for r in &table.rows {
        let mut rec = vec![
            r.method.label().to_string(),
            r.scenario.clone(),
            fmt(r.rmse_mm),
            fmt(r.rmse_pct),
            fmt(r.q1_mm),
            fmt(r.median_mm),
            fmt(r.q3_mm),
            fmt(r.min_mm),
            fmt(r.max_mm),
            r.frames.to_string(),
            r.skipped.to_string(),
        ];
        rec.extend(r.p75_per_point_mm.iter().map(|&v| fmt(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format plot data: box-plot rows and one 75th-percentile radius row
/// per sensing point, consumable by any plotting tool.
pub fn write_plot_data_csv(path: &Path, table: &ComparisonTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["scenario", "method", "stat", "point", "value_mm"])?;
    for r in &table.rows {
        let base = [
            ("q1", r.q1_mm),
            ("median", r.median_mm),
            ("q3", r.q3_mm),
            ("min", r.min_mm),
            ("max", r.max_mm),
            ("rmse", r.rmse_mm),
        ];
        for (stat, v) in base {
            w.write_record([
                r.scenario.as_str(),
                r.method.label(),
                stat,
                "",
                fmt(v).as_str(),
            ])?;
        }
        for (i, &v) in r.p75_per_point_mm.iter().enumerate() {
            w.write_record([
                r.scenario.as_str(),
                r.method.label(),
                "p75",
                &(i + 1).to_string(),
                fmt(v).as_str(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One sample of the drift-correction demonstration trace.
#[derive(Debug, Clone, Copy)]
pub struct DriftTraceSample {
    pub t: f64,
    pub truth: f64,
    pub raw_imu: f64,
    pub corrected_imu: f64,
    pub bend_reference: f64,
}

pub fn write_drift_trace_csv(path: &Path, samples: &[DriftTraceSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "t",
        "true_angle",
        "raw_imu",
        "corrected_imu",
        "bend_reference",
        "raw_error",
        "corrected_error",
    ])?;
    for s in samples {
        w.write_record([
            fmt(s.t),
            fmt(s.truth),
            fmt(s.raw_imu),
            fmt(s.corrected_imu),
            fmt(s.bend_reference),
            fmt(s.raw_imu - s.truth),
            fmt(s.corrected_imu - s.truth),
        ])?;
    }
    w.flush()?;
    Ok(())
}
