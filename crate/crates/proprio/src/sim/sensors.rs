//! Sensor synthesis: corrupt ground truth the way the physical sensors do.

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::channel_rng;

use super::{BendNoiseModel, GroundTruthFrame, ImuNoiseModel, SensorRig, VREF};

/// Per-frame IMU yaw readings (one per sensing point).
///
/// Yaw at sensing point `i` is the true cumulative orientation through
/// segment `i` plus a per-run constant-slope drift, a random-walk bias,
/// white noise, and extra noise proportional to the magnitude of the tip
/// acceleration (fast transients degrade the onboard orientation filter).
pub fn synthesize_imu(
    gt: &[GroundTruthFrame],
    model: &ImuNoiseModel,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if gt.is_empty() {
        return Err(Error::InvalidInput("empty ground truth".into()));
    }
    model.validate()?;
    let n = gt[0].thetas.len();
    let frames = gt.len();
    let dt = if frames > 1 { gt[1].t - gt[0].t } else { 0.1 };

    // Tip acceleration magnitude from second differences of the true tip.
    let mut tip_acc = vec![0.0; frames];
    if dt > 0.0 {
        for k in 1..frames.saturating_sub(1) {
            let prev = gt[k - 1].world_points.last().expect("non-empty chain");
            let cur = gt[k].world_points.last().expect("non-empty chain");
            let next = gt[k + 1].world_points.last().expect("non-empty chain");
            let ax = (next.x - 2.0 * cur.x + prev.x) / (dt * dt);
            let ay = (next.y - 2.0 * cur.y + prev.y) / (dt * dt);
            tip_acc[k] = ax.hypot(ay);
        }
    }

    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = vec![vec![0.0; n]; frames];
    // Channel-major generation: each sensing point consumes its own stream.
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        let mut rng = channel_rng(seed, &format!("imu/{i}"));
        let slope = model.drift_ramp_rate_std * unit.sample(&mut rng);
        let walk_step = model.drift_rate_std * dt.sqrt();
        let mut walk = 0.0;
        for (k, frame) in gt.iter().enumerate() {
            walk += walk_step * unit.sample(&mut rng);
            let truth: f64 = frame.thetas[..=i].iter().sum();
            let spike_std = model.acceleration_spike_gain * tip_acc[k];
            let noise = model.yaw_white_noise_std * unit.sample(&mut rng)
                + spike_std * unit.sample(&mut rng);
            out[k][i] = truth + slope * frame.t + walk + noise;
        }
    }
    Ok(out)
}

/// Result of bend synthesis: the two voltage logs plus per-frame saturation
/// flags (true bend beyond the sensors' physical range).
#[derive(Debug, Clone)]
pub struct BendSynthesis {
    pub bend_a: Vec<Vec<f64>>,
    pub bend_b: Vec<Vec<f64>>,
    pub saturated: Vec<Vec<bool>>,
}

fn quantize(v: f64, step: f64) -> f64 {
    if step > 0.0 {
        (v / step).round() * step
    } else {
        v
    }
}

/// Per-frame paired bend-sensor voltages.
///
/// Each segment pair shares one true voltage curve. The measured angle lags
/// direction changes by half the hysteresis width, saturates at the physical
/// sensing range, and the resulting voltage picks up white noise per sensor
/// before ADC clamping and quantization.
pub fn synthesize_bend(
    gt: &[GroundTruthFrame],
    model: &BendNoiseModel,
    rig: &SensorRig,
    seed: u64,
) -> Result<BendSynthesis> {
    if gt.is_empty() {
        return Err(Error::InvalidInput("empty ground truth".into()));
    }
    model.validate()?;
    let n = gt[0].thetas.len();
    if rig.curves.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: rig.curves.len(),
        });
    }
    let frames = gt.len();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let mut bend_a = vec![vec![0.0; n]; frames];
    let mut bend_b = vec![vec![0.0; n]; frames];
    let mut saturated = vec![vec![false; n]; frames];

    for i in 0..n {
        let mut rng_a = channel_rng(seed, &format!("bendA/{i}"));
        let mut rng_b = channel_rng(seed, &format!("bendB/{i}"));
        let curve = &rig.curves[i];
        let mut prev_theta = gt[0].thetas[i];
        for (k, frame) in gt.iter().enumerate() {
            let theta = frame.thetas[i];
            let direction = (theta - prev_theta).signum();
            prev_theta = theta;
            // Loading lags below the true angle, unloading above.
            let theta_h = theta - direction * 0.5 * model.hysteresis_width;
            let sat = theta_h.abs() > rig.theta_phys_max;
            let theta_sensed = theta_h.clamp(-rig.theta_phys_max, rig.theta_phys_max);
            let v = curve.voltage_for(theta_sensed);
            let va = v + model.voltage_noise_std * unit.sample(&mut rng_a);
            let vb = v + model.voltage_noise_std * unit.sample(&mut rng_b);
            bend_a[k][i] = quantize(va.clamp(0.0, VREF), model.quantization_step).clamp(0.0, VREF);
            bend_b[k][i] = quantize(vb.clamp(0.0, VREF), model.quantization_step).clamp(0.0, VREF);
            saturated[k][i] = sat;
        }
    }
    Ok(BendSynthesis {
        bend_a,
        bend_b,
        saturated,
    })
}
