//! Offline tuning of the filter noise parameters.
//!
//! The objective runs the full fusion pipeline over a training log with
//! ground truth and returns the end-effector position RMSE together with
//! the pooled orientation RMSE. Gradient descent works on central
//! finite-difference gradients (the RMSE-through-filter objective is smooth
//! almost everywhere and adjoint derivation buys nothing here), with a
//! backtracking line search so every accepted step strictly improves the
//! objective, and a projection clamp keeping covariance diagonals positive.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationSet;
use crate::drift::DriftCorrector;
use crate::error::{Error, Result};
use crate::fusion::{run_method, FusionConfigs, MethodKind};
use crate::geometry::RobotGeometry;
use crate::sim::ScenarioRun;

/// Smallest admissible covariance diagonal entry.
pub const DIAG_FLOOR: f64 = 1e-9;
/// Smallest admissible measurement-matrix block scale when H is tuned.
pub const H_SCALE_FLOOR: f64 = 0.05;

/// Which parameters descend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamMode {
    /// One process-noise scalar and one noise scalar per sensor block per
    /// filter (6 parameters). Fast and well conditioned; the default.
    BlockScalars,
    /// Full diagonals of Q and R for both filters.
    Diagonal,
}

/// Tuning settings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TunerSpec {
    /// Initial step size for the descent.
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop once an accepted step improves the objective by less than this.
    pub convergence_tol: f64,
    /// Relative finite-difference step; the absolute step for parameter `p`
    /// is `fd_step_rel * (1 + |p|)`.
    pub fd_step_rel: f64,
    pub mode: ParamMode,
    /// Also scale the two measurement blocks of H. Off by default: H's
    /// structure is the sensor-to-state wiring and is kept frozen.
    pub tune_h: bool,
}

impl Default for TunerSpec {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            max_iters: 30,
            convergence_tol: 1e-3,
            fd_step_rel: 1e-4,
            mode: ParamMode::BlockScalars,
            tune_h: false,
        }
    }
}

impl TunerSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidInput("learning rate must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be >= 1".into()));
        }
        if !(self.fd_step_rel.is_finite() && self.fd_step_rel > 0.0) {
            return Err(Error::InvalidInput("fd step must be positive".into()));
        }
        Ok(())
    }
}

/// Everything the objective needs besides the candidate configs.
pub struct ObjectiveContext<'a> {
    pub geoms: &'a RobotGeometry,
    pub cal: &'a CalibrationSet,
    pub corrector: &'a DriftCorrector,
    pub run: &'a ScenarioRun,
}

/// Weight converting orientation RMSE (rad) into the combined objective
/// (mm). Small relative to the arm length: the end-effector position is the
/// headline metric and the orientation term regularizes the angle filter.
pub const ORIENT_WEIGHT_MM_PER_RAD: f64 = 50.0;

/// Objective value: the two RMSE components and their combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub pos_rmse_mm: f64,
    pub orient_rmse_rad: f64,
    pub combined: f64,
}

/// Evaluate a candidate config pair on the training log. A diverged filter
/// (non-finite state anywhere) scores infinity rather than erroring, so the
/// descent simply rejects that candidate.
pub fn objective(configs: &FusionConfigs, ctx: &ObjectiveContext<'_>) -> ObjectiveValue {
    let diverged = ObjectiveValue {
        pos_rmse_mm: f64::INFINITY,
        orient_rmse_rad: f64::INFINITY,
        combined: f64::INFINITY,
    };
    let estimates = match run_method(
        MethodKind::Fusion,
        &ctx.run.frames,
        ctx.geoms,
        ctx.cal,
        Some(configs),
        ctx.corrector,
    ) {
        Ok(e) => e,
        Err(_) => return diverged,
    };
    let mut pos_sq = 0.0;
    let mut orient_sq = 0.0;
    let mut orient_count = 0usize;
    for (est, gt) in estimates.iter().zip(&ctx.run.gt) {
        let ee = est
            .world_points
            .last()
            .expect("non-empty chain")
            .distance(gt.world_points.last().expect("non-empty chain"));
        pos_sq += ee * ee;
        for (a, b) in est.thetas.iter().zip(&gt.thetas) {
            let d = a - b;
            orient_sq += d * d;
            orient_count += 1;
        }
    }
    let pos_rmse_mm = (pos_sq / estimates.len() as f64).sqrt();
    let orient_rmse_rad = (orient_sq / orient_count as f64).sqrt();
    if !(pos_rmse_mm.is_finite() && orient_rmse_rad.is_finite()) {
        return diverged;
    }
    ObjectiveValue {
        pos_rmse_mm,
        orient_rmse_rad,
        combined: pos_rmse_mm + orient_rmse_rad * ORIENT_WEIGHT_MM_PER_RAD,
    }
}

// ---------------------------------------------------------------------------
// Parameter vector encoding
// ---------------------------------------------------------------------------

struct Encoding {
    mode: ParamMode,
    tune_h: bool,
    n_orient: usize,
    n_coord: usize,
}

impl Encoding {
    fn encode(&self, configs: &FusionConfigs) -> Vec<f64> {
        let mut p = Vec::new();
        match self.mode {
            ParamMode::BlockScalars => {
                for cfg in [&configs.orient, &configs.coord] {
                    let n = cfg.state_dim();
                    p.push(cfg.q[(0, 0)]);
                    p.push(cfg.r[(0, 0)]);
                    p.push(cfg.r[(n, n)]);
                }
            }
            ParamMode::Diagonal => {
                for cfg in [&configs.orient, &configs.coord] {
                    let n = cfg.state_dim();
                    for i in 0..n {
                        p.push(cfg.q[(i, i)]);
                    }
                    for i in 0..2 * n {
                        p.push(cfg.r[(i, i)]);
                    }
                }
            }
        }
        if self.tune_h {
            for cfg in [&configs.orient, &configs.coord] {
                let n = cfg.state_dim();
                p.push(cfg.h[(0, 0)]);
                p.push(cfg.h[(n, 0)]);
            }
        }
        p
    }

    fn decode(&self, template: &FusionConfigs, p: &[f64]) -> FusionConfigs {
        let mut out = template.clone();
        let mut idx = 0;
        match self.mode {
            ParamMode::BlockScalars => {
                for (cfg, n) in [
                    (&mut out.orient, self.n_orient),
                    (&mut out.coord, self.n_coord),
                ] {
                    let q = p[idx].max(DIAG_FLOOR);
                    let rb = p[idx + 1].max(DIAG_FLOOR);
                    let ri = p[idx + 2].max(DIAG_FLOOR);
                    idx += 3;
                    for i in 0..n {
                        cfg.q[(i, i)] = q;
                        cfg.r[(i, i)] = rb;
                        cfg.r[(n + i, n + i)] = ri;
                        cfg.p0[(i, i)] = rb;
                    }
                }
            }
            ParamMode::Diagonal => {
                for (cfg, n) in [
                    (&mut out.orient, self.n_orient),
                    (&mut out.coord, self.n_coord),
                ] {
                    for i in 0..n {
                        cfg.q[(i, i)] = p[idx].max(DIAG_FLOOR);
                        idx += 1;
                    }
                    for i in 0..2 * n {
                        cfg.r[(i, i)] = p[idx].max(DIAG_FLOOR);
                        idx += 1;
                    }
                    for i in 0..n {
                        cfg.p0[(i, i)] = cfg.r[(i, i)];
                    }
                }
            }
        }
        if self.tune_h {
            for (cfg, n) in [
                (&mut out.orient, self.n_orient),
                (&mut out.coord, self.n_coord),
            ] {
                let hb = p[idx];
                let hi = p[idx + 1];
                idx += 2;
                for i in 0..n {
                    cfg.h[(i, i)] = hb;
                    cfg.h[(n + i, i)] = hi;
                }
            }
        }
        out
    }

    fn covariance_param_count(&self) -> usize {
        match self.mode {
            ParamMode::BlockScalars => 6,
            ParamMode::Diagonal => 3 * self.n_orient + 3 * self.n_coord,
        }
    }

    /// Clamp a raw parameter vector into the admissible region: covariance
    /// entries above the floor, measurement scales bounded away from zero.
    fn project(&self, p: &mut [f64]) {
        let cov_len = self.covariance_param_count();
        for v in p.iter_mut().take(cov_len) {
            *v = v.max(DIAG_FLOOR);
        }
        for v in p.iter_mut().skip(cov_len) {
            *v = v.max(H_SCALE_FLOOR);
        }
    }
}

/// One accepted descent step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TunerIteration {
    pub params: Vec<f64>,
    pub pos_rmse_mm: f64,
    pub orient_rmse_rad: f64,
    pub objective: f64,
}

/// Tuning outcome: the accepted-step trace (non-increasing objective), the
/// final configs, and whether the descent converged.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TunerReport {
    pub trace: Vec<TunerIteration>,
    pub converged: bool,
    pub iterations: usize,
    #[serde(skip)]
    pub configs: Option<FusionConfigs>,
}

impl TunerReport {
    pub fn initial(&self) -> &TunerIteration {
        self.trace.first().expect("trace never empty")
    }

    pub fn last(&self) -> &TunerIteration {
        self.trace.last().expect("trace never empty")
    }
}

/// Gradient-descent tuning of the filter parameters on a training log.
pub fn tune(
    spec: &TunerSpec,
    initial: &FusionConfigs,
    ctx: &ObjectiveContext<'_>,
) -> Result<TunerReport> {
    spec.validate()?;
    initial.validate()?;
    let enc = Encoding {
        mode: spec.mode,
        tune_h: spec.tune_h,
        n_orient: initial.orient.state_dim(),
        n_coord: initial.coord.state_dim(),
    };

    let mut params = enc.encode(initial);
    let mut current = objective(&enc.decode(initial, &params), ctx);
    if !current.combined.is_finite() {
        return Err(Error::Numerical(
            "objective diverges at the initial parameters".into(),
        ));
    }
    let mut trace = vec![TunerIteration {
        params: params.clone(),
        pos_rmse_mm: current.pos_rmse_mm,
        orient_rmse_rad: current.orient_rmse_rad,
        objective: current.combined,
    }];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..spec.max_iters {
        iterations += 1;

        // Central differences; each probe is an independent pipeline run.
        let probes: Vec<(usize, f64, f64)> = (0..params.len())
            .flat_map(|i| {
                let h = spec.fd_step_rel * (1.0 + params[i].abs());
                [(i, h, 1.0), (i, h, -1.0)]
            })
            .collect();
        let values: Vec<f64> = probes
            .par_iter()
            .map(|&(i, h, sign)| {
                let mut p = params.clone();
                p[i] += sign * h;
                enc.project(&mut p);
                objective(&enc.decode(initial, &p), ctx).combined
            })
            .collect();
        let mut grad = vec![0.0; params.len()];
        for i in 0..params.len() {
            let hi = values[2 * i];
            let lo = values[2 * i + 1];
            let h = spec.fd_step_rel * (1.0 + params[i].abs());
            if hi.is_finite() && lo.is_finite() {
                grad[i] = (hi - lo) / (2.0 * h);
            }
        }
        // The parameters are positive scales spanning many orders of
        // magnitude, so the descent works on their logarithms:
        // dJ/d(log p) = p * dJ/dp, and a step multiplies each parameter by
        // exp(-alpha * p * g). The step therefore shrinks with the gradient
        // and dies out at an optimum.
        let log_grad: Vec<f64> = grad.iter().zip(&params).map(|(g, p)| g * p).collect();
        let gnorm = log_grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm == 0.0 {
            converged = true;
            break;
        }

        let mut alpha = spec.learning_rate;
        let mut accepted: Option<(Vec<f64>, ObjectiveValue)> = None;
        let mut best_delta = f64::NEG_INFINITY;
        for _ in 0..24 {
            let mut candidate = params.clone();
            for (c, lg) in candidate.iter_mut().zip(&log_grad) {
                *c *= (-alpha * lg).clamp(-5.0, 5.0).exp();
            }
            enc.project(&mut candidate);
            let value = objective(&enc.decode(initial, &candidate), ctx);
            let delta = current.combined - value.combined;
            best_delta = best_delta.max(delta);
            // Armijo sufficient decrease: accepting any incidental
            // improvement from an oversized step turns the descent into a
            // random walk along flat valleys.
            if delta >= 1e-4 * alpha * gnorm * gnorm {
                accepted = Some((candidate, value));
                break;
            }
            alpha *= 0.5;
        }

        match accepted {
            Some((p, v)) => {
                let delta = current.combined - v.combined;
                params = p;
                current = v;
                trace.push(TunerIteration {
                    params: params.clone(),
                    pos_rmse_mm: current.pos_rmse_mm,
                    orient_rmse_rad: current.orient_rmse_rad,
                    objective: current.combined,
                });
                if delta < spec.convergence_tol {
                    converged = true;
                    break;
                }
            }
            None => {
                // Every trial step was rejected. At a (local) optimum the
                // achievable improvement is below tolerance: that is
                // convergence. A large outstanding improvement that the line
                // search cannot realize is a stall.
                converged = best_delta.abs() < spec.convergence_tol;
                break;
            }
        }
    }

    let configs = enc.decode(initial, &params);
    Ok(TunerReport {
        trace,
        converged,
        iterations,
        configs: Some(configs),
    })
}
