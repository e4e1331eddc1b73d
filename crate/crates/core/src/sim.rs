//! Synthetic IMU source.
//!
//! A recording is the sum of a deterministic part (gravity seen through the
//! trajectory orientation, reach acceleration, linear drift) and stochastic
//! parts (band-limited tremor, white sensor noise). The noise on channel `c`
//! is drawn from ChaCha stream `c` of the scenario seed, so
//! `synth_task(s) - synth_task(s.noiseless())` equals `gen_noise` per channel.

use std::f64::consts::PI;

use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::filter::{design_filter, FilterResponse, FilterSpec};
use crate::dsp::{DspError, TimeSeries};
use crate::imu::{Channel, ImuRecording, SensorConfig, SensorGroup, N_CHANNELS};
use crate::session::MotorTaskKind;

/// Standard gravity, m/s².
pub const STANDARD_GRAVITY: f64 = 9.80665;

const TREMOR_STREAM: u64 = 64;

pub fn ms2_to_mg(a: f64) -> f64 {
    a / STANDARD_GRAVITY * 1000.0
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("scenario JSON: {0}")]
    Json(#[from] serde_json::Error),
}

// ---------------------------------------------------------------------------
// Scenario description
// ---------------------------------------------------------------------------

/// Band-limited tremor oscillation added to the accelerometer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TremorSpec {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    /// RMS along `axis`, mg.
    pub rms_mg: f64,
    /// Direction in the accelerometer frame; normalized before use.
    #[serde(default = "default_tremor_axis")]
    pub axis: [f64; 3],
}

fn default_tremor_axis() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

impl TremorSpec {
    pub fn none() -> Self {
        Self {
            center_hz: 10.0,
            bandwidth_hz: 2.0,
            rms_mg: 0.0,
            axis: default_tremor_axis(),
        }
    }

    /// Named clinical band containing the center frequency, if any.
    pub fn band(&self) -> Option<&'static str> {
        let f = self.center_hz;
        if (9.0..=13.0).contains(&f) {
            Some("physiological")
        } else if (3.0..=6.0).contains(&f) {
            Some("parkinsonian rest")
        } else if (2.0..=7.0).contains(&f) {
            Some("essential action")
        } else {
            None
        }
    }
}

/// Large-scale limb movement underlying a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MacroMotion {
    None,
    /// Minimum-jerk reach out and back, repeated evenly over the task.
    Reach {
        distance_m: f64,
        /// Duration of one leg (out or back), s.
        leg_time_s: f64,
        repetitions: u32,
        /// Reach direction in the sensor frame.
        axis: [f64; 3],
        /// Wrist pitch at full extension, degrees, about `pitch_axis`.
        pitch_deg: f64,
        pitch_axis: [f64; 3],
    },
    /// Sinusoidal forearm roll.
    PronationSupination {
        amplitude_deg: f64,
        freq_hz: f64,
        axis: [f64; 3],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScenario {
    pub task: MotorTaskKind,
    pub duration_s: f64,
    pub tremor: TremorSpec,
    pub macro_motion: MacroMotion,
    /// Direction the accelerometer reads +1 g along at rest.
    pub gravity_axis: [f64; 3],
    /// Linear accelerometer drift per axis, mg/s.
    #[serde(default)]
    pub drift_mg_per_s: [f64; 3],
    pub seed: u64,
}

impl TaskScenario {
    pub fn rest(seed: u64) -> Self {
        Self {
            task: MotorTaskKind::Rest,
            duration_s: 10.0,
            tremor: TremorSpec {
                center_hz: 10.0,
                bandwidth_hz: 2.0,
                rms_mg: 1.0,
                axis: default_tremor_axis(),
            },
            macro_motion: MacroMotion::None,
            gravity_axis: [0.0, 0.0, 1.0],
            drift_mg_per_s: [0.0; 3],
            seed,
        }
    }

    pub fn posture(seed: u64) -> Self {
        Self {
            task: MotorTaskKind::Posture,
            tremor: TremorSpec {
                center_hz: 12.7,
                bandwidth_hz: 1.0,
                rms_mg: 4.54,
                axis: default_tremor_axis(),
            },
            ..Self::rest(seed)
        }
    }

    pub fn finger_to_nose(seed: u64) -> Self {
        Self {
            task: MotorTaskKind::FingerToNose,
            tremor: TremorSpec {
                center_hz: 10.0,
                bandwidth_hz: 2.0,
                rms_mg: 2.0,
                axis: default_tremor_axis(),
            },
            macro_motion: MacroMotion::Reach {
                distance_m: 0.65,
                leg_time_s: 0.75,
                repetitions: 3,
                axis: [0.0, 1.0, 0.0],
                pitch_deg: 25.0,
                pitch_axis: [0.0, 1.0, 0.0],
            },
            ..Self::rest(seed)
        }
    }

    pub fn hand_movement(seed: u64) -> Self {
        Self {
            task: MotorTaskKind::HandMovement,
            tremor: TremorSpec {
                center_hz: 10.0,
                bandwidth_hz: 2.0,
                rms_mg: 2.0,
                axis: default_tremor_axis(),
            },
            macro_motion: MacroMotion::PronationSupination {
                amplitude_deg: 60.0,
                freq_hz: 1.1,
                axis: [1.0, 0.0, 0.0],
            },
            ..Self::rest(seed)
        }
    }

    /// Default scenario for a built-in task; custom tasks get the rest scenario
    /// relabelled.
    pub fn default_for(kind: &MotorTaskKind, seed: u64) -> Self {
        match kind {
            MotorTaskKind::Rest => Self::rest(seed),
            MotorTaskKind::Posture => Self::posture(seed),
            MotorTaskKind::FingerToNose => Self::finger_to_nose(seed),
            MotorTaskKind::HandMovement => Self::hand_movement(seed),
            MotorTaskKind::Custom(_) => Self {
                task: kind.clone(),
                ..Self::rest(seed)
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self, fs: f64) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration {}", self.duration_s));
        }
        if norm3(self.gravity_axis) == 0.0 {
            return bad("gravity axis is zero".into());
        }
        let t = &self.tremor;
        if !(t.rms_mg >= 0.0) {
            return bad(format!("tremor rms {}", t.rms_mg));
        }
        if t.rms_mg > 0.0 {
            let (lo, hi) = (t.center_hz - t.bandwidth_hz / 2.0, t.center_hz + t.bandwidth_hz / 2.0);
            if !(t.bandwidth_hz > 0.0 && lo > 0.0 && hi < fs / 2.0) {
                return bad(format!("tremor band [{lo}, {hi}] Hz outside (0, fs/2)"));
            }
            if norm3(t.axis) == 0.0 {
                return bad("tremor axis is zero".into());
            }
        }
        match &self.macro_motion {
            MacroMotion::None => {}
            MacroMotion::Reach {
                distance_m,
                leg_time_s,
                repetitions,
                axis,
                pitch_axis,
                ..
            } => {
                if *repetitions == 0 || !(*leg_time_s > 0.0) || !(*distance_m >= 0.0) {
                    return bad("reach needs positive leg time and repetitions".into());
                }
                if 2.0 * leg_time_s * *repetitions as f64 > self.duration_s {
                    return bad("reach repetitions do not fit the task duration".into());
                }
                if norm3(*axis) == 0.0 || norm3(*pitch_axis) == 0.0 {
                    return bad("reach axis is zero".into());
                }
            }
            MacroMotion::PronationSupination { freq_hz, axis, .. } => {
                if !(*freq_hz > 0.0 && *freq_hz < fs / 2.0) || norm3(*axis) == 0.0 {
                    return bad("invalid pronation/supination".into());
                }
            }
        }
        Ok(())
    }

    /// Copy with tremor switched off.
    pub fn without_tremor(mut self) -> Self {
        self.tremor.rms_mg = 0.0;
        self
    }
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn unit(v: [f64; 3]) -> Vector3<f64> {
    Vector3::from(v) / norm3(v)
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// Minimum-jerk position fraction at normalized time `tau` ∈ [0, 1].
pub fn min_jerk_position(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// d/dτ of [`min_jerk_position`].
pub fn min_jerk_velocity(tau: f64) -> f64 {
    if !(0.0..=1.0).contains(&tau) {
        return 0.0;
    }
    30.0 * tau * tau * (1.0 - tau) * (1.0 - tau)
}

/// d²/dτ² of [`min_jerk_position`].
pub fn min_jerk_acceleration(tau: f64) -> f64 {
    if !(0.0..=1.0).contains(&tau) {
        return 0.0;
    }
    60.0 * tau - 180.0 * tau * tau + 120.0 * tau * tau * tau
}

/// Start time of each out-and-back cycle: one per equal period, centered.
pub fn reach_cycle_starts(duration_s: f64, leg_time_s: f64, repetitions: u32) -> Vec<f64> {
    let period = duration_s / repetitions as f64;
    (0..repetitions)
        .map(|k| k as f64 * period + (period - 2.0 * leg_time_s) / 2.0)
        .collect()
}

/// Extension fraction s ∈ [0, 1], ds/dt and d²s/dt² at time t.
fn reach_state(t: f64, starts: &[f64], leg: f64) -> (f64, f64, f64) {
    for &s0 in starts {
        let dt = t - s0;
        if (0.0..leg).contains(&dt) {
            let tau = dt / leg;
            return (
                min_jerk_position(tau),
                min_jerk_velocity(tau) / leg,
                min_jerk_acceleration(tau) / (leg * leg),
            );
        }
        if (leg..2.0 * leg).contains(&dt) {
            let tau = (dt - leg) / leg;
            return (
                1.0 - min_jerk_position(tau),
                -min_jerk_velocity(tau) / leg,
                -min_jerk_acceleration(tau) / (leg * leg),
            );
        }
    }
    (0.0, 0.0, 0.0)
}

/// Earth field in the rest sensor frame, gauss.
pub const EARTH_FIELD_GAUSS: [f64; 3] = [0.2, 0.0, -0.4];

/// Noise-free, tremor-free readings: gravity and Earth field rotated by the
/// trajectory orientation, reach acceleration and drift.
pub fn deterministic_motion(scenario: &TaskScenario, fs: f64) -> ImuRecording {
    let n = (scenario.duration_s * fs).round() as usize;
    let mut rec = ImuRecording::zeros(n, fs);
    let g0 = unit(scenario.gravity_axis) * 1000.0;
    let m0 = Vector3::from(EARTH_FIELD_GAUSS);

    let reach_starts = match &scenario.macro_motion {
        MacroMotion::Reach {
            leg_time_s,
            repetitions,
            ..
        } => reach_cycle_starts(scenario.duration_s, *leg_time_s, *repetitions),
        _ => Vec::new(),
    };

    for i in 0..n {
        let t = i as f64 / fs;
        // orientation angle (rad), its rate (rad/s), rotation axis, linear accel (mg)
        let (theta, rate, axis, linear) = match &scenario.macro_motion {
            MacroMotion::None => (0.0, 0.0, Vector3::z(), Vector3::zeros()),
            MacroMotion::Reach {
                distance_m,
                leg_time_s,
                axis,
                pitch_deg,
                pitch_axis,
                ..
            } => {
                let (s, ds, dds) = reach_state(t, &reach_starts, *leg_time_s);
                let pitch = pitch_deg.to_radians();
                (
                    pitch * s,
                    pitch * ds,
                    unit(*pitch_axis),
                    unit(*axis) * ms2_to_mg(distance_m * dds),
                )
            }
            MacroMotion::PronationSupination {
                amplitude_deg,
                freq_hz,
                axis,
            } => {
                let w = 2.0 * PI * freq_hz;
                let a = amplitude_deg.to_radians();
                ((w * t).sin() * a, w * a * (w * t).cos(), unit(*axis), Vector3::zeros())
            }
        };
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), theta);
        let inv = rot.inverse();
        let accel = inv * g0 + linear + Vector3::from(scenario.drift_mg_per_s) * t;
        let gyro = axis * rate.to_degrees();
        let mag = inv * m0;
        for k in 0..3 {
            rec.channels[k][i] = accel[k];
            rec.channels[3 + k][i] = gyro[k];
            rec.channels[6 + k][i] = mag[k];
        }
    }
    rec
}

// ---------------------------------------------------------------------------
// Stochastic terms
// ---------------------------------------------------------------------------

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Zero-mean Gaussian white noise for one channel, σ from the sensor config.
pub fn gen_noise(config: &SensorConfig, channel: Channel, n: usize, seed: u64) -> TimeSeries {
    let sigma = config.noise_sigma(channel);
    let samples = if sigma == 0.0 {
        vec![0.0; n]
    } else {
        let mut rng = stream_rng(seed, channel.0 as u64);
        (0..n)
            .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    TimeSeries {
        samples,
        fs: config.fs,
    }
}

/// Narrow-band Gaussian process: white noise through an order-2 Butterworth
/// band-pass, settled, then scaled to the exact requested RMS.
pub fn gen_tremor(spec: &TremorSpec, n: usize, fs: f64, seed: u64) -> Result<Vec<f64>, SimError> {
    if spec.rms_mg == 0.0 || n == 0 {
        return Ok(vec![0.0; n]);
    }
    let lo = spec.center_hz - spec.bandwidth_hz / 2.0;
    let hi = spec.center_hz + spec.bandwidth_hz / 2.0;
    let coeffs = design_filter(
        &FilterSpec::butterworth(2, FilterResponse::Bandpass(lo, hi)),
        fs,
    )?;
    let warmup = ((2.0f64).max(8.0 / spec.bandwidth_hz) * fs) as usize;
    let mut rng = stream_rng(seed, TREMOR_STREAM);
    let mut filt = coeffs.stream();
    let mut out = Vec::with_capacity(n);
    for i in 0..warmup + n {
        let y = filt.process_sample(rng.sample::<f64, _>(StandardNormal));
        if i >= warmup {
            out.push(y);
        }
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        let k = spec.rms_mg / rms;
        out.iter_mut().for_each(|v| *v *= k);
    }
    Ok(out)
}

/// Full nine-axis recording for a scenario in physical units.
pub fn synth_task(scenario: &TaskScenario, config: &SensorConfig) -> Result<ImuRecording, SimError> {
    config
        .validate()
        .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
    scenario.validate(config.fs)?;
    let mut rec = deterministic_motion(scenario, config.fs);
    let n = rec.len();

    let tremor = gen_tremor(&scenario.tremor, n, config.fs, scenario.seed)?;
    if scenario.tremor.rms_mg > 0.0 {
        let dir = unit(scenario.tremor.axis);
        for k in 0..3 {
            if dir[k] != 0.0 {
                for (x, t) in rec.channels[k].iter_mut().zip(&tremor) {
                    *x += dir[k] * t;
                }
            }
        }
    }
    for ch in Channel::all() {
        let noise = gen_noise(config, ch, n, scenario.seed);
        for (x, w) in rec.channels[ch.0].iter_mut().zip(noise.samples) {
            *x += w;
        }
    }
    Ok(rec)
}

/// Shaker bench: vertical sine of the given peak-to-peak acceleration on the
/// z axis over 1 g of gravity, plus sensor noise on every channel.
pub fn vibration_scenario(
    config: &SensorConfig,
    freq_hz: f64,
    pkpk_ms2: f64,
    duration_s: f64,
    seed: u64,
) -> Result<ImuRecording, SimError> {
    if !(freq_hz > 0.0 && freq_hz < config.fs / 2.0) {
        return Err(SimError::InvalidScenario(format!(
            "excitation {freq_hz} Hz not below Nyquist"
        )));
    }
    if !(duration_s > 0.0) || !(pkpk_ms2 >= 0.0) {
        return Err(SimError::InvalidScenario("duration and amplitude".into()));
    }
    let n = (duration_s * config.fs).round() as usize;
    let amp = ms2_to_mg(pkpk_ms2) / 2.0;
    let mut rec = ImuRecording::zeros(n, config.fs);
    let m0 = EARTH_FIELD_GAUSS;
    for i in 0..n {
        let t = i as f64 / config.fs;
        rec.channels[2][i] = 1000.0 + amp * (2.0 * PI * freq_hz * t).sin();
        for k in 0..3 {
            rec.channels[6 + k][i] = m0[k];
        }
    }
    for ch in Channel::all() {
        let noise = gen_noise(config, ch, n, seed);
        for (x, w) in rec.channels[ch.0].iter_mut().zip(noise.samples) {
            *x += w;
        }
    }
    Ok(rec)
}

// ---------------------------------------------------------------------------
// Synthetic multi-subject corpus
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hand {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub subjects: usize,
    pub task_duration_s: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            subjects: 10,
            task_duration_s: 10.0,
            seed: 2021,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpan {
    pub task: MotorTaskKind,
    /// Half-open sample range within the session recording.
    pub start: usize,
    pub end: usize,
}

/// One hand of one subject performing the four built-in tasks back to back.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSession {
    pub session_id: String,
    pub subject: usize,
    pub hand: Hand,
    pub recording: ImuRecording,
    pub tasks: Vec<TaskSpan>,
}

/// Scenario for one task of one subject/hand with inter-subject variability
/// in tremor, reach and roll parameters and in sensor mounting.
pub fn subject_scenario(kind: &MotorTaskKind, rng: &mut impl Rng, duration_s: f64) -> TaskScenario {
    let seed = rng.random::<u64>();
    let mut s = TaskScenario::default_for(kind, seed);
    s.duration_s = duration_s;
    match kind {
        MotorTaskKind::Rest => {
            s.tremor.center_hz = rng.random_range(8.5..11.5);
            s.tremor.rms_mg = rng.random_range(0.5..1.5);
        }
        MotorTaskKind::Posture => {
            s.tremor.center_hz = rng.random_range(9.5..13.0);
            s.tremor.bandwidth_hz = rng.random_range(0.8..1.5);
            s.tremor.rms_mg = rng.random_range(3.0..6.5);
        }
        MotorTaskKind::FingerToNose => {
            s.tremor.rms_mg = rng.random_range(1.0..3.0);
            if let MacroMotion::Reach {
                distance_m,
                leg_time_s,
                pitch_deg,
                ..
            } = &mut s.macro_motion
            {
                *distance_m = rng.random_range(0.5..0.75);
                *leg_time_s = rng.random_range(0.65..0.9);
                *pitch_deg = rng.random_range(15.0..35.0);
            }
        }
        MotorTaskKind::HandMovement => {
            s.tremor.rms_mg = rng.random_range(1.0..3.0);
            if let MacroMotion::PronationSupination {
                amplitude_deg,
                freq_hz,
                ..
            } = &mut s.macro_motion
            {
                *amplitude_deg = rng.random_range(45.0..70.0);
                *freq_hz = rng.random_range(0.9..1.4);
            }
        }
        MotorTaskKind::Custom(_) => {}
    }
    let tilt = [
        rng.random_range(-0.25..0.25),
        rng.random_range(-0.25..0.25),
        1.0,
    ];
    s.gravity_axis = tilt;
    s.tremor.axis = [rng.random_range(-0.3..0.3), 1.0, rng.random_range(-0.3..0.3)];
    s.drift_mg_per_s = std::array::from_fn(|_| rng.random_range(-0.05..0.05));
    s
}

/// `subjects` × 2 hands sessions, each RP, PP, FN, HM in that order.
pub fn synthetic_corpus(config: &SensorConfig, corpus: &CorpusConfig) -> Result<Vec<SyntheticSession>, SimError> {
    let mut out = Vec::with_capacity(corpus.subjects * 2);
    for subject in 0..corpus.subjects {
        for hand in [Hand::Left, Hand::Right] {
            let idx = (subject * 2 + (hand == Hand::Right) as usize) as u64;
            let mut rng = stream_rng(corpus.seed, 1_000 + idx);
            let mut recording = ImuRecording::zeros(0, config.fs);
            let mut tasks = Vec::new();
            for kind in MotorTaskKind::BUILTIN.iter() {
                let scenario = subject_scenario(kind, &mut rng, corpus.task_duration_s);
                let rec = synth_task(&scenario, config)?;
                let start = recording.len();
                recording.extend(&rec);
                tasks.push(TaskSpan {
                    task: kind.clone(),
                    start,
                    end: recording.len(),
                });
            }
            out.push(SyntheticSession {
                session_id: format!("S{:02}{}", subject + 1, if hand == Hand::Left { "L" } else { "R" }),
                subject,
                hand,
                recording,
                tasks,
            });
        }
    }
    Ok(out)
}

/// Channels of one sensor group, in axis order.
pub fn group_channels(rec: &ImuRecording, group: SensorGroup) -> [&[f64]; 3] {
    group.channels().map(|c| rec.channels[c.0].as_slice())
}

/// Per-sample Euclidean norm of a sensor group.
pub fn group_norm(rec: &ImuRecording, group: SensorGroup) -> Vec<f64> {
    let [x, y, z] = group_channels(rec, group);
    (0..rec.len())
        .map(|i| (x[i] * x[i] + y[i] * y[i] + z[i] * z[i]).sqrt())
        .collect()
}

const _: () = assert!(N_CHANNELS == 9);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{periodogram_slice, rms_detrended_slice};
    use crate::dsp::filter::SosFilter;
    use crate::imu::quantize;

    #[test]
    fn noise_sigma_matches_density() {
        let cfg = SensorConfig::default();
        let w = gen_noise(&cfg, Channel::ACCEL_Z, 100_000, 7);
        let rms = rms_detrended_slice(&w.samples).unwrap();
        assert!((rms / 3.677 - 1.0).abs() < 0.03, "{rms}");
        let zero = gen_noise(&cfg.clone().noiseless(), Channel::ACCEL_Z, 10, 7);
        assert!(zero.samples.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn posture_tremor_peak() {
        let cfg = SensorConfig::default();
        let rec = synth_task(&TaskScenario::posture(3), &cfg).unwrap();
        let spec = periodogram_slice(&rec.channels[1], cfg.fs, rec.len()).unwrap();
        let k = spec.argmax_from(1).unwrap();
        assert!((spec.frequency(k) - 12.7).abs() <= 0.5, "{}", spec.frequency(k));
    }

    #[test]
    fn gravity_only_rest_has_unit_norm() {
        let cfg = SensorConfig::default().noiseless();
        let s = TaskScenario::rest(1).without_tremor();
        let rec = synth_task(&s, &cfg).unwrap();
        for v in group_norm(&rec, SensorGroup::Accel) {
            assert!((v - 1000.0).abs() < 1e-9);
        }
        let a = synth_task(&s, &cfg).unwrap();
        assert_eq!(a, rec);
    }

    #[test]
    fn noise_is_additive_and_seeded() {
        let cfg = SensorConfig::default();
        let s = TaskScenario::hand_movement(11).without_tremor();
        let full = synth_task(&s, &cfg).unwrap();
        let clean = deterministic_motion(&s, cfg.fs);
        let w = gen_noise(&cfg, Channel(4), full.len(), 11);
        for i in 0..full.len() {
            assert!((full.channels[4][i] - clean.channels[4][i] - w.samples[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn finger_to_nose_reach_rms() {
        let cfg = SensorConfig::default();
        let rec = synth_task(&TaskScenario::finger_to_nose(5), &cfg).unwrap();
        let bp = FilterSpec::butterworth(3, FilterResponse::Bandpass(0.25, 2.25));
        let mut f = SosFilter::new(design_filter(&bp, cfg.fs).unwrap());
        let y = rec.channels[1].clone();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let centered: Vec<f64> = y.iter().map(|v| v - mean).collect();
        let out = f.process(&centered);
        let rms = rms_detrended_slice(&out).unwrap();
        assert!((250.0..=400.0).contains(&rms), "{rms}");

        // analytic RMS of the raw reach acceleration over the task
        let (d, leg, reps, dur) = (0.65, 0.75, 3.0, 10.0);
        let analytic = ms2_to_mg(d / (leg * leg)) * (120.0f64 / 7.0).sqrt() * (2.0 * leg * reps / dur).sqrt();
        let clean = deterministic_motion(&TaskScenario::finger_to_nose(5), cfg.fs);
        let raw = rms_detrended_slice(&clean.channels[1]).unwrap();
        assert!((raw / analytic - 1.0).abs() < 0.01, "{raw} vs {analytic}");
    }

    #[test]
    fn reach_cycles_are_centered() {
        let starts = reach_cycle_starts(9.0, 0.5, 3);
        assert_eq!(starts, vec![1.0, 4.0, 7.0]);
        assert_eq!(min_jerk_position(1.0), 1.0);
        assert_eq!(min_jerk_velocity(0.0), 0.0);
    }

    #[test]
    fn vibration_levels() {
        let cfg = SensorConfig::default();
        let rec = vibration_scenario(&cfg, 10.0, 10.0, 10.0, 1).unwrap();
        let rms = rms_detrended_slice(&rec.channels[2]).unwrap();
        assert!((rms / 360.5 - 1.0).abs() < 0.02, "{rms}");
        let quiet = vibration_scenario(&cfg, 10.0, 0.0, 10.0, 1).unwrap();
        let noise = gen_noise(&cfg, Channel::ACCEL_Z, quiet.len(), 1);
        assert!(
            (rms_detrended_slice(&quiet.channels[2]).unwrap() - rms_detrended_slice(&noise.samples).unwrap()).abs()
                < 1e-9
        );
    }

    #[test]
    fn default_scenarios_never_saturate() {
        let cfg = SensorConfig::default();
        for kind in MotorTaskKind::BUILTIN.iter() {
            let rec = synth_task(&TaskScenario::default_for(kind, 9), &cfg).unwrap();
            let (_, stats) = quantize(&rec, &cfg, 0);
            assert_eq!(stats.total(), 0, "{kind}");
        }
    }

    #[test]
    fn corpus_shape() {
        let cfg = SensorConfig::default();
        let corpus = synthetic_corpus(&cfg, &CorpusConfig { subjects: 2, ..Default::default() }).unwrap();
        assert_eq!(corpus.len(), 4);
        assert_eq!(corpus[0].tasks.len(), 4);
        assert_eq!(corpus[0].recording.len(), 8000);
        assert_eq!(corpus[3].session_id, "S02R");
    }

    #[test]
    fn scenario_json_round_trip() {
        let s = TaskScenario::finger_to_nose(42);
        assert_eq!(TaskScenario::from_json(&s.to_json()).unwrap(), s);
        let mut bad = TaskScenario::posture(1);
        bad.tremor.center_hz = 99.8;
        assert!(bad.validate(200.0).is_err());
    }
}
