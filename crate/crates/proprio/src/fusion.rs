//! Shape estimation pipelines: the full two-filter fusion and the three
//! single-source baselines it is compared against.
//!
//! Per frame the fusion pipeline:
//!
//! 1. maps paired bend voltages to segment angles through the calibration,
//! 2. differences consecutive IMU yaws into raw segment angles and corrects
//!    their drift against the bend-derived angles,
//! 3. maps each sensor's angle set to local endpoints with the arc model,
//! 4. fuses the two angle sets in one Kalman filter and the two endpoint
//!    sets in another (the filters share no state),
//! 5. composes fused angles and fused local endpoints into world frame.
//!
//! The baselines reuse steps 1-3 and map a single source straight through
//! the kinematics: calibrated bend only, drift-corrected IMU only, or raw
//! IMU only.

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationSet;
use crate::drift::DriftCorrector;
use crate::error::{Error, Result};
use crate::geometry::{BendAngle, PlanarPoint, RobotGeometry};
use crate::kalman::{fuse_step, KalmanConfig, KalmanState};
use crate::kinematics::{compose_chain, segment_endpoint};
use crate::sim::{BendNoiseModel, ImuNoiseModel, SensorFrame};

/// Default process-noise diagonal for the angle filter (rad^2).
pub const DEFAULT_Q_ORIENT: f64 = 1e-4;
/// Default process-noise diagonal for the coordinate filter (mm^2).
pub const DEFAULT_Q_COORD: f64 = 1e-2;
/// Floor keeping measurement covariances positive definite (the noiseless
/// limit would otherwise make R singular).
pub const R_FLOOR: f64 = 1e-12;

/// The four estimator variants compared in the evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MethodKind {
    /// Full pipeline: drift correction plus two-filter fusion.
    Fusion,
    /// Calibrated bend sensors straight through the kinematics.
    Bend,
    /// Drift-corrected IMU angles straight through the kinematics.
    ImuCorrected,
    /// Raw IMU angles straight through the kinematics.
    ImuRaw,
}

impl MethodKind {
    pub const ALL: [MethodKind; 4] = [
        MethodKind::Fusion,
        MethodKind::Bend,
        MethodKind::ImuCorrected,
        MethodKind::ImuRaw,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            MethodKind::Fusion => "Fusion",
            MethodKind::Bend => "Bend",
            MethodKind::ImuCorrected => "IMU_C",
            MethodKind::ImuRaw => "IMU_O",
        }
    }
}

/// One frame's shape estimate: fused (or single-source) segment angles and
/// the endpoint coordinates in both the local segment frames and the world
/// frame, plus per-segment flags for clamped calibration inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotShapeEstimate {
    pub t: f64,
    pub thetas: Vec<f64>,
    pub local_points: Vec<PlanarPoint>,
    pub world_points: Vec<PlanarPoint>,
    pub clamped: Vec<bool>,
}

/// The filter pair used by the fusion pipeline.
#[derive(Debug, Clone)]
pub struct FusionConfigs {
    pub orient: KalmanConfig,
    pub coord: KalmanConfig,
}

impl FusionConfigs {
    /// Initial configs derived from the sensor noise models.
    ///
    /// Measurement variances follow the models through the sensing chain:
    /// bend noise maps through the calibration slope (pair-averaged) plus a
    /// hysteresis term; IMU angle noise doubles through yaw differencing and
    /// carries the expected residual drift after correction. Coordinate
    /// variances scale the angle variances by the segment length. All
    /// entries are floored to keep R positive definite in the noiseless
    /// limit, where the filters then track measurements essentially exactly.
    pub fn from_noise_models(
        geoms: &RobotGeometry,
        cal: &CalibrationSet,
        imu_model: &ImuNoiseModel,
        bend_model: &BendNoiseModel,
        corrector_window_s: f64,
    ) -> Self {
        let n = geoms.len();
        let slope_nom = cal
            .maps
            .iter()
            .map(|m| m.slope(0.5 * (m.v_min + m.v_max)).abs())
            .sum::<f64>()
            / cal.maps.len().max(1) as f64;

        let var_bend_theta = slope_nom * slope_nom * bend_model.voltage_noise_std.powi(2) / 2.0
            + (0.5 * bend_model.hysteresis_width).powi(2);
        // Residual drift after correction: random-walk wander within the
        // averaging window plus ramp lag over half a window, doubled by yaw
        // differencing.
        let lag_var = (corrector_window_s / 3.0) * imu_model.drift_rate_std.powi(2)
            + (0.5 * corrector_window_s * imu_model.drift_ramp_rate_std).powi(2);
        let var_imu_theta = 2.0 * (imu_model.yaw_white_noise_std.powi(2) + lag_var);

        let l_nom = geoms.total_length_mm() / n as f64;
        let coord_gain = (0.6 * l_nom).powi(2);

        let orient = KalmanConfig::dual_sensor(
            n,
            DEFAULT_Q_ORIENT,
            var_bend_theta.max(R_FLOOR),
            var_imu_theta.max(R_FLOOR),
        );
        let coord = KalmanConfig::dual_sensor(
            2 * n,
            DEFAULT_Q_COORD,
            (coord_gain * var_bend_theta).max(R_FLOOR),
            (coord_gain * var_imu_theta).max(R_FLOOR),
        );
        Self { orient, coord }
    }

    pub fn validate(&self) -> Result<()> {
        self.orient.validate()?;
        self.coord.validate()
    }

    pub fn save(&self, dir: &std::path::Path) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
        let orient_path = dir.join("kf_orient.json");
        let coord_path = dir.join("kf_coord.json");
        self.orient.save(&orient_path)?;
        self.coord.save(&coord_path)?;
        Ok((orient_path, coord_path))
    }

    pub fn load(dir: &std::path::Path) -> Result<Self> {
        Ok(Self {
            orient: KalmanConfig::load(&dir.join("kf_orient.json"))?,
            coord: KalmanConfig::load(&dir.join("kf_coord.json"))?,
        })
    }
}

/// One Kalman lane: config plus lazily initialized state. The first
/// measurement pair seeds the state from the bend block (the drift-free
/// anchor) with the configured initial covariance.
#[derive(Debug, Clone)]
struct FilterLane {
    config: KalmanConfig,
    state: Option<KalmanState>,
}

impl FilterLane {
    fn new(config: KalmanConfig) -> Self {
        Self {
            config,
            state: None,
        }
    }

    fn fuse(&mut self, bend: &[f64], imu: &[f64]) -> Result<Vec<f64>> {
        match &mut self.state {
            None => {
                let x = nalgebra::DVector::from_row_slice(bend);
                self.state = Some(KalmanState::new(x, self.config.p0.clone()));
                Ok(bend.to_vec())
            }
            Some(state) => fuse_step(state, &self.config, bend, imu),
        }
    }
}

/// Stateful estimator for one method over one log.
#[derive(Debug, Clone)]
pub struct ShapeEstimator {
    kind: MethodKind,
    geoms: RobotGeometry,
    cal: CalibrationSet,
    correctors: Vec<DriftCorrector>,
    orient: Option<FilterLane>,
    coord: Option<FilterLane>,
}

impl ShapeEstimator {
    /// Build an estimator. `configs` is required for the fusion method and
    /// ignored by the single-source baselines; the drift corrector template
    /// is cloned per IMU channel.
    pub fn new(
        kind: MethodKind,
        geoms: RobotGeometry,
        cal: CalibrationSet,
        configs: Option<&FusionConfigs>,
        corrector: &DriftCorrector,
    ) -> Result<Self> {
        let n = geoms.len();
        if cal.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: cal.len(),
            });
        }
        let (orient, coord) = if kind == MethodKind::Fusion {
            let cfg = configs.ok_or_else(|| {
                Error::InvalidInput("fusion method needs kalman configs".into())
            })?;
            cfg.validate()?;
            if cfg.orient.state_dim() != n || cfg.coord.state_dim() != 2 * n {
                return Err(Error::Dimension {
                    context: "fusion configs",
                    expected: format!("orient {n}, coord {}", 2 * n),
                    got: format!(
                        "orient {}, coord {}",
                        cfg.orient.state_dim(),
                        cfg.coord.state_dim()
                    ),
                });
            }
            (
                Some(FilterLane::new(cfg.orient.clone())),
                Some(FilterLane::new(cfg.coord.clone())),
            )
        } else {
            (None, None)
        };
        Ok(Self {
            kind,
            geoms,
            cal,
            correctors: vec![corrector.clone(); n],
            orient,
            coord,
        })
    }

    pub fn kind(&self) -> MethodKind {
        self.kind
    }

    /// Raw per-segment IMU angles from consecutive yaw differences.
    fn imu_segment_angles(yaw: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(yaw.len());
        let mut prev = 0.0;
        for &y in yaw {
            out.push(y - prev);
            prev = y;
        }
        out
    }

    fn locals_for(&self, thetas: &[f64]) -> Result<(Vec<PlanarPoint>, Vec<BendAngle>)> {
        let angles: Vec<BendAngle> = thetas
            .iter()
            .map(|&t| BendAngle::saturating(t))
            .collect::<Result<_>>()?;
        let locals = self
            .geoms
            .segments
            .iter()
            .zip(&angles)
            .map(|(g, &a)| segment_endpoint(g, a))
            .collect();
        Ok((locals, angles))
    }

    fn shape_from_thetas(
        &self,
        t: f64,
        thetas: Vec<f64>,
        clamped: Vec<bool>,
    ) -> Result<RobotShapeEstimate> {
        let (locals, angles) = self.locals_for(&thetas)?;
        let world = compose_chain(&locals, &angles);
        Ok(RobotShapeEstimate {
            t,
            thetas,
            local_points: locals,
            world_points: world,
            clamped,
        })
    }

    /// One predict-update cycle of the angle filter.
    pub fn fuse_orientation(&mut self, bend: &[f64], imu: &[f64]) -> Result<Vec<f64>> {
        self.orient
            .as_mut()
            .ok_or_else(|| Error::InvalidInput("orientation filter not configured".into()))?
            .fuse(bend, imu)
            .map_err(|e| e.in_stage("kalman-orientation"))
    }

    /// One predict-update cycle of the coordinate filter over stacked
    /// `(x, y)` local endpoints.
    pub fn fuse_coordinates(&mut self, bend: &[f64], imu: &[f64]) -> Result<Vec<f64>> {
        self.coord
            .as_mut()
            .ok_or_else(|| Error::InvalidInput("coordinate filter not configured".into()))?
            .fuse(bend, imu)
            .map_err(|e| e.in_stage("kalman-coordinates"))
    }

    /// Process one sensor frame into a shape estimate.
    pub fn estimate(&mut self, frame: &SensorFrame) -> Result<RobotShapeEstimate> {
        let n = self.geoms.len();
        if frame.imu_yaw.len() != n || frame.bend_a.len() != n || frame.bend_b.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: frame.imu_yaw.len(),
            });
        }

        let pairs: Vec<(f64, f64)> = frame
            .bend_a
            .iter()
            .zip(&frame.bend_b)
            .map(|(&a, &b)| (a, b))
            .collect();
        let (theta_bend, clamped) = self
            .cal
            .orientations(&pairs)
            .map_err(|e| e.in_stage("calibration"))?;

        if self.kind == MethodKind::Bend {
            return self.shape_from_thetas(frame.t, theta_bend, clamped);
        }

        let theta_raw = Self::imu_segment_angles(&frame.imu_yaw);
        if self.kind == MethodKind::ImuRaw {
            return self.shape_from_thetas(frame.t, theta_raw, vec![false; n]);
        }

        let mut theta_corrected = Vec::with_capacity(n);
        for i in 0..n {
            let corrected = self.correctors[i]
                .update(theta_raw[i], theta_bend[i])
                .map_err(|e| e.in_stage("drift-correction"))?;
            theta_corrected.push(corrected);
        }
        if self.kind == MethodKind::ImuCorrected {
            return self.shape_from_thetas(frame.t, theta_corrected, vec![false; n]);
        }

        // Fusion: filter angles and local endpoints separately, then compose.
        let (locals_bend, _) = self
            .locals_for(&theta_bend)
            .map_err(|e| e.in_stage("kinematics"))?;
        let (locals_imu, _) = self
            .locals_for(&theta_corrected)
            .map_err(|e| e.in_stage("kinematics"))?;

        let fused_theta = self.fuse_orientation(&theta_bend, &theta_corrected)?;

        let stack = |pts: &[PlanarPoint]| {
            let mut v = Vec::with_capacity(2 * pts.len());
            for p in pts {
                v.push(p.x);
                v.push(p.y);
            }
            v
        };
        let fused_xy = self.fuse_coordinates(&stack(&locals_bend), &stack(&locals_imu))?;
        let fused_locals: Vec<PlanarPoint> = fused_xy
            .chunks_exact(2)
            .map(|c| PlanarPoint::new(c[0], c[1]))
            .collect();

        let fused_angles: Vec<BendAngle> = fused_theta
            .iter()
            .map(|&t| BendAngle::saturating(t))
            .collect::<Result<_>>()
            .map_err(|e| e.in_stage("kinematics"))?;
        let world = compose_chain(&fused_locals, &fused_angles);

        Ok(RobotShapeEstimate {
            t: frame.t,
            thetas: fused_theta,
            local_points: fused_locals,
            world_points: world,
            clamped,
        })
    }
}

/// Run one method over a whole log.
pub fn run_method(
    kind: MethodKind,
    frames: &[SensorFrame],
    geoms: &RobotGeometry,
    cal: &CalibrationSet,
    configs: Option<&FusionConfigs>,
    corrector: &DriftCorrector,
) -> Result<Vec<RobotShapeEstimate>> {
    let mut estimator = ShapeEstimator::new(kind, geoms.clone(), cal.clone(), configs, corrector)?;
    frames.iter().map(|f| estimator.estimate(f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::fit_calibration;
    use crate::drift::DriftCorrector;
    use crate::sim::{
        assemble_run, generate_trajectory, ScenarioKind, ScenarioSpec, SensorRig,
    };
    use approx::assert_relative_eq;

    fn noiseless_setup(
        duration: f64,
    ) -> (
        RobotGeometry,
        CalibrationSet,
        FusionConfigs,
        crate::sim::ScenarioRun,
    ) {
        let geoms = RobotGeometry::default_arm();
        let rig = SensorRig::generate(42, geoms.len());
        let spec = ScenarioSpec::new(ScenarioKind::Swing, duration, 10.0, 7).unwrap();
        let gt = generate_trajectory(&spec, &geoms).unwrap();
        let imu0 = ImuNoiseModel::zero();
        let bend0 = BendNoiseModel::zero();
        let run = assemble_run(spec, gt, &geoms, &imu0, &bend0, &rig).unwrap();

        // Calibrate on the run itself: exact samples, exact quadratic.
        let maps = (0..geoms.len())
            .map(|i| {
                let samples: Vec<(f64, f64)> = run
                    .frames
                    .iter()
                    .zip(&run.gt)
                    .map(|(f, g)| (0.5 * (f.bend_a[i] + f.bend_b[i]), g.thetas[i]))
                    .collect();
                fit_calibration(&samples).unwrap()
            })
            .collect();
        let cal = CalibrationSet { maps };
        let configs =
            FusionConfigs::from_noise_models(&geoms, &cal, &imu0, &bend0, 10.0);
        (geoms, cal, configs, run)
    }

    #[test]
    fn noiseless_pipeline_recovers_ground_truth_for_all_methods() {
        let (geoms, cal, configs, run) = noiseless_setup(20.0);
        let corrector = DriftCorrector::with_defaults();
        for kind in MethodKind::ALL {
            let est = run_method(kind, &run.frames, &geoms, &cal, Some(&configs), &corrector)
                .unwrap();
            let mut worst = 0.0f64;
            for (e, g) in est.iter().zip(&run.gt) {
                let err = e
                    .world_points
                    .last()
                    .unwrap()
                    .distance(g.world_points.last().unwrap());
                worst = worst.max(err);
            }
            assert!(
                worst < 1e-6,
                "{}: worst end-effector error {worst} mm",
                kind.label()
            );
        }
    }

    #[test]
    fn orientation_filter_ignores_coordinate_measurements() {
        let (geoms, cal, configs, run) = noiseless_setup(10.0);
        let corrector = DriftCorrector::with_defaults();
        let baseline = run_method(
            MethodKind::Fusion,
            &run.frames,
            &geoms,
            &cal,
            Some(&configs),
            &corrector,
        )
        .unwrap();

        // Same log with the coordinate filter's noise scaled wildly: fused
        // angles must not move.
        let mut altered = configs.clone();
        altered.coord.r *= 1e6;
        altered.coord.q *= 1e3;
        let shifted = run_method(
            MethodKind::Fusion,
            &run.frames,
            &geoms,
            &cal,
            Some(&altered),
            &corrector,
        )
        .unwrap();
        for (a, b) in baseline.iter().zip(&shifted) {
            for (ta, tb) in a.thetas.iter().zip(&b.thetas) {
                assert_relative_eq!(ta, tb, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn single_segment_fusion_matches_scalar_hand_computation() {
        // One segment, hand-built measurements, one fuse cycle after the
        // bend-anchored init. Prior p = r_b (init) + q; both measurements at
        // the same value z pull the state to
        // x1 = (x0/p + z/r_b + z/r_i) / (1/p + 1/r_b + 1/r_i).
        let geoms = RobotGeometry::new(vec![
            crate::geometry::SegmentGeometry::new(100.0, 0.0, true).unwrap()
        ])
        .unwrap();
        let map = crate::calibration::CalibrationMap {
            a: 0.0,
            b: 1.0,
            c: 0.0,
            v_min: -1.0,
            v_max: 1.0,
            fit_rmse: 0.0,
        };
        let cal = CalibrationSet { maps: vec![map] };
        let (q, r_b, r_i) = (0.01, 0.04, 0.09);
        let configs = FusionConfigs {
            orient: KalmanConfig::dual_sensor(1, q, r_b, r_i),
            coord: KalmanConfig::dual_sensor(2, q, r_b, r_i),
        };
        let mut est = ShapeEstimator::new(
            MethodKind::Fusion,
            geoms,
            cal,
            Some(&configs),
            &DriftCorrector::new(100, 10.0).unwrap(),
        )
        .unwrap();

        let frame0 = SensorFrame {
            t: 0.0,
            imu_yaw: vec![0.10],
            bend_a: vec![0.10],
            bend_b: vec![0.10],
            saturated: vec![false],
        };
        let out0 = est.estimate(&frame0).unwrap();
        assert_relative_eq!(out0.thetas[0], 0.10, epsilon = 1e-12);

        let frame1 = SensorFrame {
            t: 0.1,
            imu_yaw: vec![0.20],
            bend_a: vec![0.20],
            bend_b: vec![0.20],
            saturated: vec![false],
        };
        let out1 = est.estimate(&frame1).unwrap();
        let p = r_b + q;
        let info = 1.0 / p + 1.0 / r_b + 1.0 / r_i;
        let expected = (0.10 / p + 0.20 / r_b + 0.20 / r_i) / info;
        assert_relative_eq!(out1.thetas[0], expected, epsilon = 1e-12);
    }

    #[test]
    fn fusion_requires_configs() {
        let geoms = RobotGeometry::default_arm();
        let cal = CalibrationSet {
            maps: vec![
                crate::calibration::CalibrationMap {
                    a: 0.0,
                    b: 1.0,
                    c: 0.0,
                    v_min: 0.0,
                    v_max: 3.0,
                    fit_rmse: 0.0,
                };
                6
            ],
        };
        assert!(ShapeEstimator::new(
            MethodKind::Fusion,
            geoms,
            cal,
            None,
            &DriftCorrector::with_defaults()
        )
        .is_err());
    }

    #[test]
    fn estimates_flag_clamped_calibration_inputs() {
        let geoms = RobotGeometry::new(vec![
            crate::geometry::SegmentGeometry::new(100.0, 0.0, true).unwrap()
        ])
        .unwrap();
        let map = crate::calibration::CalibrationMap {
            a: 0.0,
            b: 1.0,
            c: 0.0,
            v_min: -0.5,
            v_max: 0.5,
            fit_rmse: 0.0,
        };
        let cal = CalibrationSet { maps: vec![map] };
        let mut est = ShapeEstimator::new(
            MethodKind::Bend,
            geoms,
            cal,
            None,
            &DriftCorrector::with_defaults(),
        )
        .unwrap();
        let frame = SensorFrame {
            t: 0.0,
            imu_yaw: vec![0.0],
            bend_a: vec![0.9],
            bend_b: vec![0.9],
            saturated: vec![false],
        };
        let out = est.estimate(&frame).unwrap();
        assert!(out.clamped[0]);
        assert_relative_eq!(out.thetas[0], 0.5, epsilon = 1e-12);
    }
}
