//! Linear Kalman filter over small dense matrices.
//!
//! Both estimation filters (segment angles and local endpoint coordinates)
//! share this implementation. The state transition is identity with zero
//! control by default (quasi-static motion between samples); the measurement
//! stacks a bend-derived block on top of an IMU-derived block, so the
//! measurement dimension is twice the state dimension. The covariance update
//! uses the Joseph form, which stays positive semi-definite for any gain,
//! including the unusual H/Q/R candidates the offline tuner explores.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

/// Serialized matrix form: row-major data with declared dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixJson {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(m[(r, c)]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Dimension {
                context: "matrix json",
                expected: format!("{} values", self.rows * self.cols),
                got: format!("{}", self.data.len()),
            });
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

/// Filter matrices: transition `a`, control `b`, measurement `h`, process
/// noise `q`, measurement noise `r`, and initial covariance `p0`.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanConfig {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p0: DMatrix<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct KalmanConfigJson {
    a: MatrixJson,
    b: MatrixJson,
    h: MatrixJson,
    q: MatrixJson,
    r: MatrixJson,
    p0: MatrixJson,
}

impl KalmanConfig {
    /// Identity-transition filter fusing two sensor blocks of the same
    /// n-dimensional quantity: H stacks two identity blocks, Q and the two R
    /// blocks are scalar multiples of identity.
    pub fn dual_sensor(n: usize, q: f64, r_first: f64, r_second: f64) -> Self {
        let mut r = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            r[(i, i)] = r_first;
            r[(n + i, n + i)] = r_second;
        }
        let mut h = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            h[(i, i)] = 1.0;
            h[(n + i, i)] = 1.0;
        }
        Self {
            a: DMatrix::identity(n, n),
            b: DMatrix::zeros(n, n),
            h,
            q: DMatrix::identity(n, n) * q,
            r,
            p0: DMatrix::identity(n, n) * r_first,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn measurement_dim(&self) -> usize {
        self.h.nrows()
    }

    /// Check dimensional consistency and that Q, R, P0 are usable
    /// covariances (symmetric, R positive definite, Q and P0 PSD).
    pub fn validate(&self) -> Result<()> {
        let n = self.state_dim();
        let m = self.measurement_dim();
        let square = [("a", &self.a), ("q", &self.q), ("p0", &self.p0)];
        for (name, mat) in square {
            if mat.nrows() != n || mat.ncols() != n {
                return Err(Error::Dimension {
                    context: "kalman config",
                    expected: format!("{name} {n}x{n}"),
                    got: format!("{}x{}", mat.nrows(), mat.ncols()),
                });
            }
        }
        if self.h.ncols() != n {
            return Err(Error::Dimension {
                context: "kalman config",
                expected: format!("h columns {n}"),
                got: format!("{}", self.h.ncols()),
            });
        }
        if self.r.nrows() != m || self.r.ncols() != m {
            return Err(Error::Dimension {
                context: "kalman config",
                expected: format!("r {m}x{m}"),
                got: format!("{}x{}", self.r.nrows(), self.r.ncols()),
            });
        }
        if self.b.nrows() != n {
            return Err(Error::Dimension {
                context: "kalman config",
                expected: format!("b rows {n}"),
                got: format!("{}", self.b.nrows()),
            });
        }
        for (name, mat) in [("q", &self.q), ("r", &self.r), ("p0", &self.p0)] {
            let scale = mat.amax().max(1.0);
            if (mat - mat.transpose()).amax() > 1e-9 * scale {
                return Err(Error::InvalidInput(format!("{name} is not symmetric")));
            }
        }
        for (name, mat) in [("q", &self.q), ("p0", &self.p0)] {
            let min_eig = mat
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if min_eig < -1e-9 * mat.amax().max(1.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} is not positive semi-definite (min eigenvalue {min_eig})"
                )));
            }
        }
        if Cholesky::new(self.r.clone()).is_none() {
            return Err(Error::InvalidInput(
                "r is not positive definite".into(),
            ));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let json: KalmanConfigJson = serde_json::from_str(&text)?;
        let cfg = Self {
            a: json.a.to_matrix()?,
            b: json.b.to_matrix()?,
            h: json.h.to_matrix()?,
            q: json.q.to_matrix()?,
            r: json.r.to_matrix()?,
            p0: json.p0.to_matrix()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = KalmanConfigJson {
            a: MatrixJson::from_matrix(&self.a),
            b: MatrixJson::from_matrix(&self.b),
            h: MatrixJson::from_matrix(&self.h),
            q: MatrixJson::from_matrix(&self.q),
            r: MatrixJson::from_matrix(&self.r),
            p0: MatrixJson::from_matrix(&self.p0),
        };
        std::fs::write(path, serde_json::to_string_pretty(&json)?)?;
        Ok(())
    }
}

/// Filter state: estimate, covariance, and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    pub step: u64,
}

impl KalmanState {
    pub fn new(x: DVector<f64>, p: DMatrix<f64>) -> Self {
        Self { x, p, step: 0 }
    }

    pub fn from_config(config: &KalmanConfig) -> Self {
        let n = config.state_dim();
        Self {
            x: DVector::zeros(n),
            p: config.p0.clone(),
            step: 0,
        }
    }
}

fn symmetrize(p: &mut DMatrix<f64>) {
    let pt = p.transpose();
    *p += pt;
    *p *= 0.5;
}

/// Time update: propagate the state and covariance one step.
pub fn predict(state: &mut KalmanState, config: &KalmanConfig, u: Option<&DVector<f64>>) -> Result<()> {
    let n = config.state_dim();
    if state.x.len() != n {
        return Err(Error::Dimension {
            context: "predict",
            expected: format!("state dim {n}"),
            got: format!("{}", state.x.len()),
        });
    }
    state.x = &config.a * &state.x;
    if let Some(u) = u {
        if u.len() != config.b.ncols() {
            return Err(Error::Dimension {
                context: "predict",
                expected: format!("control dim {}", config.b.ncols()),
                got: format!("{}", u.len()),
            });
        }
        state.x += &config.b * u;
    }
    state.p = &config.a * &state.p * config.a.transpose() + &config.q;
    symmetrize(&mut state.p);
    Ok(())
}

/// Measurement update with the stacked measurement vector.
pub fn update(state: &mut KalmanState, config: &KalmanConfig, z: &DVector<f64>) -> Result<()> {
    let n = config.state_dim();
    let m = config.measurement_dim();
    if z.len() != m {
        return Err(Error::Dimension {
            context: "update",
            expected: format!("measurement dim {m}"),
            got: format!("{}", z.len()),
        });
    }
    let h = &config.h;
    let s = h * &state.p * h.transpose() + &config.r;
    let chol = Cholesky::new(s).ok_or_else(|| {
        Error::Numerical(format!(
            "innovation covariance not positive definite (n={n}, m={m}, step={})",
            state.step
        ))
    })?;
    // K = P H^T S^-1, computed as (S^-1 (H P))^T using the symmetry of S, P.
    let k = chol.solve(&(h * &state.p)).transpose();
    let innovation = z - h * &state.x;
    state.x += &k * innovation;

    let ikh = DMatrix::identity(n, n) - &k * h;
    state.p = &ikh * &state.p * ikh.transpose() + &k * &config.r * k.transpose();
    symmetrize(&mut state.p);
    state.step += 1;
    Ok(())
}

/// One predict-update cycle fusing a bend-derived and an IMU-derived reading
/// of the same n-dimensional quantity. `bend` fills the first measurement
/// block, `imu` the second.
pub fn fuse_step(
    state: &mut KalmanState,
    config: &KalmanConfig,
    bend: &[f64],
    imu: &[f64],
) -> Result<Vec<f64>> {
    let n = config.state_dim();
    if bend.len() != n || imu.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: bend.len().max(imu.len()),
        });
    }
    predict(state, config, None)?;
    let mut z = DVector::zeros(2 * n);
    for i in 0..n {
        z[i] = bend[i];
        z[n + i] = imu[i];
    }
    update(state, config, &z)?;
    Ok(state.x.iter().cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn identity_predict_without_noise_is_noop() {
        let config = KalmanConfig {
            q: DMatrix::zeros(2, 2),
            ..KalmanConfig::dual_sensor(2, 1.0, 1.0, 1.0)
        };
        let mut state = KalmanState::new(
            DVector::from_vec(vec![1.0, -2.0]),
            DMatrix::identity(2, 2) * 0.5,
        );
        predict(&mut state, &config, None).unwrap();
        assert_relative_eq!(state.x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(state.x[1], -2.0, epsilon = 1e-12);
        assert_relative_eq!(state.p[(0, 0)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn identity_predict_adds_process_noise() {
        let config = KalmanConfig::dual_sensor(3, 0.25, 1.0, 1.0);
        let mut state = KalmanState::new(DVector::zeros(3), DMatrix::identity(3, 3));
        predict(&mut state, &config, None).unwrap();
        for i in 0..3 {
            assert_relative_eq!(state.p[(i, i)], 1.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn huge_measurement_noise_leaves_state() {
        let config = KalmanConfig::dual_sensor(1, 0.01, 1e12, 1e12);
        let mut state = KalmanState::new(DVector::from_vec(vec![2.0]), DMatrix::identity(1, 1));
        let z = DVector::from_vec(vec![100.0, 100.0]);
        predict(&mut state, &config, None).unwrap();
        update(&mut state, &config, &z).unwrap();
        assert!((state.x[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn exact_sensor_limit_snaps_to_bend_block() {
        let config = KalmanConfig::dual_sensor(2, 0.01, 1e-14, 10.0);
        let mut state = KalmanState::new(DVector::zeros(2), DMatrix::identity(2, 2));
        let z = DVector::from_vec(vec![0.7, -0.3, 5.0, 5.0]);
        predict(&mut state, &config, None).unwrap();
        update(&mut state, &config, &z).unwrap();
        assert_relative_eq!(state.x[0], 0.7, epsilon = 1e-6);
        assert_relative_eq!(state.x[1], -0.3, epsilon = 1e-6);
    }

    #[test]
    fn scalar_two_measurement_fusion_closed_form() {
        // Prior variance 1, two unit-variance measurements: gain 1/3 each,
        // posterior variance 1/3 (information additivity).
        let config = KalmanConfig {
            q: DMatrix::zeros(1, 1),
            ..KalmanConfig::dual_sensor(1, 0.0, 1.0, 1.0)
        };
        let mut state = KalmanState::new(DVector::zeros(1), DMatrix::identity(1, 1));
        let z = DVector::from_vec(vec![1.0, 1.0]);
        update(&mut state, &config, &z).unwrap();
        assert_relative_eq!(state.x[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(state.p[(0, 0)], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn posterior_information_matches_closed_form_over_random_instances() {
        // 1-state, 2-measurement: 1/P_post = 1/P + h1^2/r1 + h2^2/r2.
        let mut rng = crate::rng::channel_rng(5, "kalman-oracle");
        for _ in 0..1000 {
            let p: f64 = rng.gen_range(0.01..10.0);
            let r1: f64 = rng.gen_range(0.01..10.0);
            let r2: f64 = rng.gen_range(0.01..10.0);
            let h1: f64 = rng.gen_range(0.1..2.0);
            let h2: f64 = rng.gen_range(0.1..2.0);
            let mut h = DMatrix::zeros(2, 1);
            h[(0, 0)] = h1;
            h[(1, 0)] = h2;
            let mut r = DMatrix::zeros(2, 2);
            r[(0, 0)] = r1;
            r[(1, 1)] = r2;
            let config = KalmanConfig {
                a: DMatrix::identity(1, 1),
                b: DMatrix::zeros(1, 1),
                h,
                q: DMatrix::zeros(1, 1),
                r,
                p0: DMatrix::identity(1, 1) * p,
            };
            let mut state = KalmanState::new(DVector::zeros(1), config.p0.clone());
            let z = DVector::from_vec(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            update(&mut state, &config, &z).unwrap();
            let expected = 1.0 / (1.0 / p + h1 * h1 / r1 + h2 * h2 / r2);
            assert_relative_eq!(state.p[(0, 0)], expected, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn covariance_stays_symmetric_psd_under_random_cycles() {
        let mut rng = crate::rng::channel_rng(9, "kalman-psd");
        let n = 3;
        let config = KalmanConfig::dual_sensor(n, 0.05, 0.3, 0.7);
        let mut state = KalmanState::new(DVector::zeros(n), config.p0.clone());
        for _ in 0..100_000 {
            let bend: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let imu: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            fuse_step(&mut state, &config, &bend, &imu).unwrap();
        }
        let asym = (&state.p - state.p.transpose()).amax();
        assert!(asym < 1e-12);
        let min_eig = state
            .p
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(min_eig >= -1e-10, "min eigenvalue {min_eig}");
    }

    #[test]
    fn random_transition_keeps_covariance_psd() {
        let mut rng = crate::rng::channel_rng(13, "kalman-psd-predict");
        for _ in 0..1000 {
            let n = 2;
            let mut a = DMatrix::zeros(n, n);
            for r in 0..n {
                for c in 0..n {
                    a[(r, c)] = rng.gen_range(-1.2..1.2);
                }
            }
            let config = KalmanConfig {
                a,
                ..KalmanConfig::dual_sensor(n, 0.1, 1.0, 1.0)
            };
            let mut state = KalmanState::new(DVector::zeros(n), config.p0.clone());
            for _ in 0..10 {
                predict(&mut state, &config, None).unwrap();
            }
            let min_eig = state
                .p
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            assert!(min_eig >= -1e-10 * state.p.amax());
        }
    }

    #[test]
    fn fused_steady_state_beats_each_single_sensor() {
        let n = 1;
        let q = 0.02;
        let (r_bend, r_imu) = (0.5, 0.2);
        let fused_cfg = KalmanConfig::dual_sensor(n, q, r_bend, r_imu);

        let single = |r: f64| {
            let cfg = KalmanConfig {
                a: DMatrix::identity(1, 1),
                b: DMatrix::zeros(1, 1),
                h: DMatrix::identity(1, 1),
                q: DMatrix::identity(1, 1) * q,
                r: DMatrix::identity(1, 1) * r,
                p0: DMatrix::identity(1, 1) * r,
            };
            let mut st = KalmanState::new(DVector::zeros(1), cfg.p0.clone());
            for _ in 0..500 {
                predict(&mut st, &cfg, None).unwrap();
                update(&mut st, &cfg, &DVector::zeros(1)).unwrap();
            }
            st.p[(0, 0)]
        };

        let mut fused = KalmanState::new(DVector::zeros(1), fused_cfg.p0.clone());
        for _ in 0..500 {
            fuse_step(&mut fused, &fused_cfg, &[0.0], &[0.0]).unwrap();
        }
        let p_fused = fused.p[(0, 0)];
        assert!(p_fused <= single(r_bend) + 1e-12);
        assert!(p_fused <= single(r_imu) + 1e-12);
    }

    #[test]
    fn riccati_recursion_is_scale_equivariant() {
        // Doubling Q, R, and P0 together doubles P and leaves the gain (and
        // therefore the state trajectory) unchanged; doubling R alone does
        // not. A moving measurement keeps the trajectory gain-sensitive.
        let run = |q: f64, r: f64, p0: f64| {
            let cfg = KalmanConfig {
                p0: DMatrix::identity(1, 1) * p0,
                ..KalmanConfig::dual_sensor(1, q, r, r)
            };
            let mut st = KalmanState::new(DVector::zeros(1), cfg.p0.clone());
            for k in 0..200 {
                let z = (0.1 * k as f64).sin();
                fuse_step(&mut st, &cfg, &[z], &[z]).unwrap();
            }
            (st.x[0], st.p[(0, 0)])
        };
        let (x1, p1) = run(0.1, 0.4, 1.0);
        let (x2, p2) = run(0.2, 0.8, 2.0);
        assert_relative_eq!(x1, x2, epsilon = 1e-12);
        assert_relative_eq!(2.0 * p1, p2, epsilon = 1e-12);
        let (x3, _) = run(0.1, 0.8, 1.0);
        assert!((x1 - x3).abs() > 1e-6);
    }

    #[test]
    fn consistent_measurements_reach_steady_identity() {
        let config = KalmanConfig::dual_sensor(2, 0.05, 0.4, 0.4);
        let mut state = KalmanState::new(
            DVector::from_vec(vec![0.7, -0.2]),
            config.p0.clone(),
        );
        for _ in 0..300 {
            fuse_step(&mut state, &config, &[0.7, -0.2], &[0.7, -0.2]).unwrap();
        }
        assert_relative_eq!(state.x[0], 0.7, epsilon = 1e-9);
        assert_relative_eq!(state.x[1], -0.2, epsilon = 1e-9);
    }

    #[test]
    fn disagreeing_sensors_fuse_strictly_between() {
        let config = KalmanConfig::dual_sensor(1, 0.05, 0.4, 0.4);
        let mut state = KalmanState::new(DVector::zeros(1), config.p0.clone());
        for _ in 0..200 {
            fuse_step(&mut state, &config, &[0.0], &[10f64.to_radians()]).unwrap();
        }
        assert!(state.x[0] > 0.0 && state.x[0] < 10f64.to_radians());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let config = KalmanConfig::dual_sensor(2, 0.1, 1.0, 1.0);
        let mut state = KalmanState::new(DVector::zeros(3), DMatrix::identity(3, 3));
        assert!(matches!(
            predict(&mut state, &config, None),
            Err(Error::Dimension { .. })
        ));
        let mut state = KalmanState::from_config(&config);
        let bad_z = DVector::zeros(3);
        assert!(matches!(
            update(&mut state, &config, &bad_z),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn validate_rejects_indefinite_r() {
        let mut config = KalmanConfig::dual_sensor(1, 0.1, 1.0, 1.0);
        config.r[(0, 0)] = -1.0;
        assert!(config.validate().is_err());
        let config = KalmanConfig::dual_sensor(2, 0.1, 0.5, 0.25);
        assert!(config.validate().is_ok());
    }

    #[test]
    fn config_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kf.json");
        let config = KalmanConfig::dual_sensor(3, 0.07, 0.4, 0.9);
        config.save(&path).unwrap();
        let back = KalmanConfig::load(&path).unwrap();
        assert_eq!(config, back);
    }
}
