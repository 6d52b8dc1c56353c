//! Ground-truth trajectory generators for the validation scenarios and the
//! training/calibration run.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{BendAngle, PlanarPoint, RobotGeometry};
use crate::kinematics::{compose_chain, segment_endpoint, split_arc_segment_endpoint};
use crate::rng::channel_rng;

use super::{GroundTruthFrame, ScenarioKind, ScenarioSpec};

/// Peak total bend of the lateral sweep (rad): +/-50 degrees across the arm.
pub const SWEEP_AMPLITUDE: f64 = 50.0 * std::f64::consts::PI / 180.0;
/// Sweep period (s).
pub const SWEEP_PERIOD_S: f64 = 40.0;

/// Segment index (0-based) that meets the obstacle in the contact scenario.
const CONTACT_SEGMENT: usize = 2;
/// Total bend at which the contacted segment hits the obstacle (rad).
const CONTACT_THRESHOLD: f64 = 35.0 * std::f64::consts::PI / 180.0;
/// How strongly blocked bend is amplified into the distal segments.
const WRAP_GAIN: f64 = 1.8;
/// Curvature asymmetry of the contacted arc while pressed on the obstacle:
/// the proximal half carries this fraction of the segment's total bend.
const CONTACT_SPLIT: f64 = 0.8;

/// Mean gap between external force impulses (s).
const FORCE_MEAN_GAP_S: f64 = 10.0;
const FORCE_MIN_DURATION_S: f64 = 0.5;
const FORCE_MAX_DURATION_S: f64 = 2.0;
const FORCE_MIN_AMPLITUDE: f64 = 5.0 * std::f64::consts::PI / 180.0;
const FORCE_MAX_AMPLITUDE: f64 = 15.0 * std::f64::consts::PI / 180.0;

/// Smooth lateral sweep of the whole arm.
fn sweep_total(t: f64) -> f64 {
    SWEEP_AMPLITUDE * (2.0 * std::f64::consts::PI * t / SWEEP_PERIOD_S).sin()
}

fn world_points_uniform(geoms: &RobotGeometry, thetas: &[f64]) -> Result<Vec<PlanarPoint>> {
    let angles = to_angles(thetas)?;
    let locals: Vec<PlanarPoint> = geoms
        .segments
        .iter()
        .zip(&angles)
        .map(|(g, &a)| segment_endpoint(g, a))
        .collect();
    Ok(compose_chain(&locals, &angles))
}

fn to_angles(thetas: &[f64]) -> Result<Vec<BendAngle>> {
    thetas.iter().map(|&t| BendAngle::new(t)).collect()
}

/// One externally applied force impulse: a half-sine bend perturbation
/// concentrated around one segment.
#[derive(Debug, Clone, Copy)]
struct ForceEvent {
    start: f64,
    duration: f64,
    amplitude: f64,
    focus: usize,
}

fn draw_force_events(seed: u64, duration: f64, segments: usize) -> Vec<ForceEvent> {
    let mut rng = channel_rng(seed, "force-events");
    let mut events = Vec::new();
    let mut t = 0.0;
    loop {
        // Exponential inter-arrival times give Poisson event counts.
        let gap: f64 = -FORCE_MEAN_GAP_S * (1.0 - rng.gen::<f64>()).ln();
        t += gap;
        if t >= duration {
            break;
        }
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        events.push(ForceEvent {
            start: t,
            duration: rng.gen_range(FORCE_MIN_DURATION_S..FORCE_MAX_DURATION_S),
            amplitude: sign * rng.gen_range(FORCE_MIN_AMPLITUDE..FORCE_MAX_AMPLITUDE),
            focus: rng.gen_range(0..segments),
        });
    }
    events
}

fn force_perturbation(events: &[ForceEvent], t: f64, segments: usize) -> Vec<f64> {
    let mut extra = vec![0.0; segments];
    for e in events {
        if t >= e.start && t < e.start + e.duration {
            let phase = (t - e.start) / e.duration;
            let pulse = e.amplitude * (std::f64::consts::PI * phase).sin();
            // The poked segment takes half the deflection, the rest spreads.
            for (i, x) in extra.iter_mut().enumerate() {
                let share = if i == e.focus {
                    0.5
                } else {
                    0.5 / (segments - 1).max(1) as f64
                };
                *x += pulse * share;
            }
        }
    }
    extra
}

/// Generate the ground-truth trajectory for a scenario.
pub fn generate_trajectory(spec: &ScenarioSpec, geoms: &RobotGeometry) -> Result<Vec<GroundTruthFrame>> {
    geoms.validate()?;
    let n = geoms.len();
    let frames = spec.frame_count();
    let dt = spec.dt();
    let w = 1.0 / n as f64;

    let force_events = match spec.kind {
        ScenarioKind::ExternalForce => draw_force_events(spec.seed, spec.duration_s, n),
        _ => Vec::new(),
    };

    let mut out = Vec::with_capacity(frames);
    for k in 0..frames {
        let t = k as f64 * dt;
        let total = sweep_total(t);
        let mut thetas: Vec<f64> = (0..n).map(|_| w * total).collect();
        let mut violation = false;

        match spec.kind {
            ScenarioKind::Swing => {}
            ScenarioKind::ExternalForce => {
                let extra = force_perturbation(&force_events, t, n);
                for (th, e) in thetas.iter_mut().zip(&extra) {
                    *th += e;
                }
            }
            ScenarioKind::ObstacleContact => {
                if total > CONTACT_THRESHOLD {
                    // The contacted segment stops at its contact bend; the
                    // blocked deflection piles (amplified) onto the distal
                    // segments as the arm wraps around the obstacle.
                    let excess = total - CONTACT_THRESHOLD;
                    let distal = n - CONTACT_SEGMENT - 1;
                    thetas[CONTACT_SEGMENT] = w * CONTACT_THRESHOLD;
                    for th in thetas.iter_mut().take(CONTACT_SEGMENT) {
                        *th = w * CONTACT_THRESHOLD;
                    }
                    for th in thetas.iter_mut().skip(CONTACT_SEGMENT + 1) {
                        *th = w * CONTACT_THRESHOLD + WRAP_GAIN * excess / distal.max(1) as f64;
                    }
                    violation = true;
                }
            }
        }

        let world_points = if violation {
            let angles = to_angles(&thetas)?;
            let mut locals: Vec<PlanarPoint> = geoms
                .segments
                .iter()
                .zip(&angles)
                .map(|(g, &a)| segment_endpoint(g, a))
                .collect();
            locals[CONTACT_SEGMENT] = split_arc_segment_endpoint(
                &geoms.segments[CONTACT_SEGMENT],
                angles[CONTACT_SEGMENT],
                CONTACT_SPLIT,
            )?;
            compose_chain(&locals, &angles)
        } else {
            world_points_uniform(geoms, &thetas)?
        };

        out.push(GroundTruthFrame {
            t,
            thetas,
            world_points,
            pcc_violation: violation,
        });
    }
    if out.is_empty() {
        return Err(Error::InvalidInput("trajectory has no frames".into()));
    }
    Ok(out)
}

/// Composition of the training log.
#[derive(Debug, Clone, Copy)]
pub struct TrainingMix {
    /// Fraction of the log spent on the calibration sweep; the remainder
    /// holds randomized per-segment curvatures.
    pub sweep_fraction: f64,
    /// Per-segment range of the randomized curvature targets (rad).
    pub random_theta_range: f64,
    /// Dwell between successive random targets (s).
    pub dwell_s: f64,
}

impl Default for TrainingMix {
    fn default() -> Self {
        Self {
            sweep_fraction: 2.0 / 3.0,
            random_theta_range: 10.0f64.to_radians(),
            dwell_s: 5.0,
        }
    }
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Generate the training trajectory: a calibration sweep followed by
/// randomized per-segment curvatures that decorrelate the segment angles.
pub fn generate_training_trajectory(
    spec: &ScenarioSpec,
    geoms: &RobotGeometry,
    mix: &TrainingMix,
) -> Result<Vec<GroundTruthFrame>> {
    geoms.validate()?;
    let n = geoms.len();
    let frames = spec.frame_count();
    let dt = spec.dt();
    let w = 1.0 / n as f64;
    let sweep_end = mix.sweep_fraction * spec.duration_s;

    // Pre-draw the random curvature waypoints.
    let mut rng = channel_rng(spec.seed, "training-targets");
    let random_duration = spec.duration_s - sweep_end;
    let target_count = (random_duration / mix.dwell_s).ceil() as usize + 2;
    let targets: Vec<Vec<f64>> = (0..target_count)
        .map(|_| {
            (0..n)
                .map(|_| rng.gen_range(-mix.random_theta_range..mix.random_theta_range))
                .collect()
        })
        .collect();

    let mut out = Vec::with_capacity(frames);
    for k in 0..frames {
        let t = k as f64 * dt;
        let thetas: Vec<f64> = if t < sweep_end {
            let total = sweep_total(t);
            (0..n).map(|_| w * total).collect()
        } else {
            let tr = t - sweep_end;
            let idx = (tr / mix.dwell_s) as usize;
            let alpha = smoothstep(tr / mix.dwell_s - idx as f64);
            let from = &targets[idx.min(target_count - 1)];
            let to = &targets[(idx + 1).min(target_count - 1)];
            (0..n).map(|i| from[i] + alpha * (to[i] - from[i])).collect()
        };
        let world_points = world_points_uniform(geoms, &thetas)?;
        out.push(GroundTruthFrame {
            t,
            thetas,
            world_points,
            pcc_violation: false,
        });
    }
    Ok(out)
}
