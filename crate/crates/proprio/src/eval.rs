//! Error metrics and method comparison.
//!
//! The headline error is the Euclidean distance between the estimated and
//! true end-effector positions, summarized as RMSE and as a percentage of
//! the total arm length. Distributions are reported as quartiles (linear
//! interpolation between closest ranks) and as the 75th-percentile error
//! radius per sensing point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{run_method, FusionConfigs, MethodKind, RobotShapeEstimate};
use crate::geometry::RobotGeometry;
use crate::sim::{GroundTruthFrame, ScenarioRun};
use crate::drift::DriftCorrector;
use crate::calibration::CalibrationSet;

/// Per-frame Euclidean errors of every sensing point against the matching
/// ground-truth frame.
pub fn frame_error(estimate: &RobotShapeEstimate, gt: &GroundTruthFrame) -> Result<Vec<f64>> {
    if estimate.world_points.len() != gt.world_points.len() {
        return Err(Error::LengthMismatch {
            expected: gt.world_points.len(),
            got: estimate.world_points.len(),
        });
    }
    Ok(estimate
        .world_points
        .iter()
        .zip(&gt.world_points)
        .map(|(e, g)| e.distance(g))
        .collect())
}

/// Linear-interpolation percentile of already-sorted values, `p` in [0, 100].
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    if sorted.len() == 1 {
        return sorted[0];
    }
    let rank = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Summary of one method's errors on one scenario (or their union).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: MethodKind,
    pub scenario: String,
    /// Root mean square end-effector error (mm).
    pub rmse_mm: f64,
    /// RMSE as a percentage of total arm length.
    pub rmse_pct: f64,
    pub q1_mm: f64,
    pub median_mm: f64,
    pub q3_mm: f64,
    pub min_mm: f64,
    pub max_mm: f64,
    /// 75th-percentile error radius per sensing point (mm).
    pub p75_per_point_mm: Vec<f64>,
    /// Frames evaluated.
    pub frames: usize,
    /// Frames skipped because no ground truth fell within half a sample
    /// period of the estimate.
    pub skipped: usize,
}

/// Per-frame error material kept around so scenario rows can be merged into
/// union rows without re-running the pipelines.
#[derive(Debug, Clone, Default)]
pub struct ErrorSamples {
    /// End-effector error per evaluated frame (mm).
    pub end_effector: Vec<f64>,
    /// Per sensing point: errors per evaluated frame (mm).
    pub per_point: Vec<Vec<f64>>,
    pub skipped: usize,
}

impl ErrorSamples {
    pub fn merge(&mut self, other: &ErrorSamples) {
        if self.per_point.is_empty() {
            self.per_point = vec![Vec::new(); other.per_point.len()];
        }
        self.end_effector.extend_from_slice(&other.end_effector);
        for (dst, src) in self.per_point.iter_mut().zip(&other.per_point) {
            dst.extend_from_slice(src);
        }
        self.skipped += other.skipped;
    }
}

/// Collect per-frame errors for a sequence of estimates against ground
/// truth. Estimates are matched to the nearest ground-truth timestamp; a
/// frame with no ground truth within half a sample period is skipped and
/// counted.
pub fn collect_errors(
    estimates: &[RobotShapeEstimate],
    gt: &[GroundTruthFrame],
    sample_period_s: f64,
) -> Result<ErrorSamples> {
    if gt.is_empty() {
        return Err(Error::InvalidInput("empty ground truth".into()));
    }
    let points = gt[0].world_points.len();
    let mut samples = ErrorSamples {
        end_effector: Vec::with_capacity(estimates.len()),
        per_point: vec![Vec::with_capacity(estimates.len()); points],
        skipped: 0,
    };
    let mut cursor = 0usize;
    for est in estimates {
        // Ground truth is time-ordered; advance the cursor to the closest t.
        while cursor + 1 < gt.len()
            && (gt[cursor + 1].t - est.t).abs() <= (gt[cursor].t - est.t).abs()
        {
            cursor += 1;
        }
        if (gt[cursor].t - est.t).abs() > 0.5 * sample_period_s {
            samples.skipped += 1;
            continue;
        }
        let errs = frame_error(est, &gt[cursor])?;
        samples.end_effector.push(*errs.last().expect("non-empty chain"));
        for (dst, e) in samples.per_point.iter_mut().zip(&errs) {
            dst.push(*e);
        }
    }
    Ok(samples)
}

/// Reduce error samples to the reported summary.
pub fn summarize(
    method: MethodKind,
    scenario: &str,
    samples: &ErrorSamples,
    total_length_mm: f64,
) -> Result<MethodResult> {
    if samples.end_effector.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no evaluated frames for {} on {scenario}",
            method.label()
        )));
    }
    let n = samples.end_effector.len() as f64;
    let rmse_mm = (samples.end_effector.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let mut sorted = samples.end_effector.clone();
    sorted.sort_by(f64::total_cmp);
    let p75_per_point_mm = samples
        .per_point
        .iter()
        .map(|errs| {
            let mut s = errs.clone();
            s.sort_by(f64::total_cmp);
            percentile_sorted(&s, 75.0)
        })
        .collect();
    Ok(MethodResult {
        method,
        scenario: scenario.to_string(),
        rmse_mm,
        rmse_pct: rmse_mm / total_length_mm * 100.0,
        q1_mm: percentile_sorted(&sorted, 25.0),
        median_mm: percentile_sorted(&sorted, 50.0),
        q3_mm: percentile_sorted(&sorted, 75.0),
        min_mm: sorted[0],
        max_mm: *sorted.last().expect("non-empty"),
        p75_per_point_mm,
        frames: samples.end_effector.len(),
        skipped: samples.skipped,
    })
}

/// Full comparison table: every method on every scenario plus a union row
/// over the concatenated per-frame errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<MethodResult>,
}

impl ComparisonTable {
    pub fn get(&self, method: MethodKind, scenario: &str) -> Option<&MethodResult> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.scenario == scenario)
    }
}

/// Run all four estimator variants over the given scenario logs and
/// summarize per scenario and over the union.
pub fn compare_methods(
    runs: &[ScenarioRun],
    geoms: &RobotGeometry,
    cal: &CalibrationSet,
    configs: &FusionConfigs,
    corrector: &DriftCorrector,
) -> Result<ComparisonTable> {
    if runs.is_empty() {
        return Err(Error::InvalidInput("no scenario runs to evaluate".into()));
    }
    let total_len = geoms.total_length_mm();
    let mut rows = Vec::new();
    for method in MethodKind::ALL {
        let mut union = ErrorSamples::default();
        for run in runs {
            let estimates = run_method(
                method,
                &run.frames,
                geoms,
                cal,
                Some(configs),
                corrector,
            )?;
            let samples = collect_errors(&estimates, &run.gt, run.spec.dt())?;
            rows.push(summarize(
                method,
                run.spec.kind.label(),
                &samples,
                total_len,
            )?);
            union.merge(&samples);
        }
        if runs.len() > 1 {
            rows.push(summarize(method, "union", &union, total_len)?);
        }
    }
    Ok(ComparisonTable { rows })
}
