//! Bench procedures run against the simulator: stationary noise, sine
//! vibration and engine latency.

use std::fmt::Write as _;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use tremor_core::dsp::{peak_stats_slice, periodogram_slice, psd_from_rms, rms_detrended_slice};
use tremor_core::imu::{dequantize, quantize, Channel, ImuRecording, SensorConfig};
use tremor_core::session::MotorTaskKind;
use tremor_core::sim::{synth_task, vibration_scenario, SimError, TaskScenario, TremorSpec};

use crate::engine::{Engine, EngineConfig, EngineError, EngineHandle, SinkMessage};
use crate::latency::{Distribution, LatencyStats, END_TO_END_BUDGET_MS, PROCESSING_BUDGET_MS};
use crate::log::{LogWriter, ThreadedLog};
use crate::queue::RecvTimeout;
use crate::source::{spawn_paced, ScenarioCycle};
use crate::view::ViewTransform;

const AXES: [&str; 3] = ["X", "Y", "Z"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisStats {
    pub label: String,
    pub rms_mg: f64,
    pub peak_to_peak_mg: f64,
    /// RMS over √(noise bandwidth), mg/√Hz.
    pub psd_mg_per_rthz: f64,
    pub dominant_hz: Option<f64>,
}

impl AxisStats {
    pub fn psd_ug_per_rthz(&self) -> f64 {
        self.psd_mg_per_rthz * 1000.0
    }
}

fn axis_stats(label: String, x: &[f64], fs: f64, bw: f64) -> AxisStats {
    let rms = rms_detrended_slice(x).expect("non-empty series");
    let pk = peak_stats_slice(x).expect("non-empty series");
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let spec = periodogram_slice(&centered, fs, x.len()).expect("valid periodogram");
    AxisStats {
        label,
        rms_mg: rms,
        peak_to_peak_mg: pk.peak_to_peak,
        psd_mg_per_rthz: psd_from_rms(rms, bw).expect("positive bandwidth"),
        dominant_hz: spec.argmax_from(1).filter(|&k| spec.power[k] > 0.0).map(|k| spec.frequency(k)),
    }
}

/// Passes a recording through the quantizer, as the sensor would.
fn through_adc(rec: &ImuRecording, cfg: &SensorConfig) -> ImuRecording {
    dequantize(&quantize(rec, cfg, 0).0, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseBench {
    pub fs: f64,
    pub bandwidth_hz: f64,
    pub samples: usize,
    pub expected_sigma_mg: f64,
    /// One row per accelerometer axis aligned with gravity.
    pub rows: Vec<AxisStats>,
}

/// Stationary sensor: for each accelerometer axis in turn, gravity along
/// that axis, no motion; statistics of the aligned axis.
pub fn bench_noise(cfg: &SensorConfig, samples: usize, seed: u64) -> Result<NoiseBench, SimError> {
    let mut rows = Vec::new();
    for (a, name) in AXES.iter().enumerate() {
        let mut sc = TaskScenario::rest(seed.wrapping_add(a as u64));
        sc.tremor = TremorSpec::none();
        sc.drift_mg_per_s = [0.0; 3];
        sc.duration_s = samples as f64 / cfg.fs;
        sc.gravity_axis = [0.0; 3];
        sc.gravity_axis[a] = 1.0;
        let rec = through_adc(&synth_task(&sc, cfg)?, cfg);
        let x = &rec.channels[Channel(a).0];
        rows.push(axis_stats(format!("{name} as Z"), &x[..samples.min(x.len())], cfg.fs, cfg.noise_bandwidth));
    }
    Ok(NoiseBench {
        fs: cfg.fs,
        bandwidth_hz: cfg.noise_bandwidth,
        samples,
        expected_sigma_mg: cfg.noise_sigma(Channel::ACCEL_X),
        rows,
    })
}

impl NoiseBench {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "Stationary noise, fs {} Hz, bandwidth {} Hz, {} samples, model sigma {:.3} mg\n",
            self.fs, self.bandwidth_hz, self.samples, self.expected_sigma_mg
        );
        let _ = writeln!(s, "{:<8} {:>10} {:>14} {:>16}", "axis", "RMS (mg)", "pk-pk (mg)", "PSD (ug/rtHz)");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<8} {:>10.3} {:>14.2} {:>16.1}",
                r.label,
                r.rms_mg,
                r.peak_to_peak_mg,
                r.psd_ug_per_rthz()
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VibrationBench {
    pub freq_hz: f64,
    pub pkpk_ms2: f64,
    pub duration_s: f64,
    /// Analytic RMS of the sine, mg.
    pub expected_rms_mg: f64,
    pub expected_pkpk_mg: f64,
    /// Accelerometer x, y, z; the excitation is along z.
    pub axes: Vec<AxisStats>,
    pub delta_f: f64,
}

pub fn bench_vibration(cfg: &SensorConfig, freq_hz: f64, pkpk_ms2: f64, duration_s: f64, seed: u64) -> Result<VibrationBench, SimError> {
    let rec = through_adc(&vibration_scenario(cfg, freq_hz, pkpk_ms2, duration_s, seed)?, cfg);
    let pkpk_mg = pkpk_ms2 / tremor_core::sim::STANDARD_GRAVITY * 1000.0;
    let axes = (0..3)
        .map(|a| axis_stats(AXES[a].to_string(), &rec.channels[a], cfg.fs, cfg.noise_bandwidth))
        .collect();
    Ok(VibrationBench {
        freq_hz,
        pkpk_ms2,
        duration_s,
        expected_rms_mg: pkpk_mg / 2.0 / std::f64::consts::SQRT_2,
        expected_pkpk_mg: pkpk_mg,
        axes,
        delta_f: cfg.fs / rec.len() as f64,
    })
}

impl VibrationBench {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "Sine {} Hz, {} m/s^2 pk-pk along Z, {} s; analytic RMS {:.1} mg, pk-pk {:.1} mg\n",
            self.freq_hz, self.pkpk_ms2, self.duration_s, self.expected_rms_mg, self.expected_pkpk_mg
        );
        let _ = writeln!(
            s,
            "{:<5} {:>10} {:>12} {:>16} {:>10}",
            "axis", "RMS (mg)", "pk-pk (mg)", "PSD (mg/rtHz)", "f_dom Hz"
        );
        for r in &self.axes {
            let _ = writeln!(
                s,
                "{:<5} {:>10.2} {:>12.2} {:>16.3} {:>10}",
                r.label,
                r.rms_mg,
                r.peak_to_peak_mg,
                r.psd_mg_per_rthz,
                r.dominant_hz.map_or("-".into(), |f| format!("{f:.2}"))
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyBench {
    pub fs: f64,
    pub paced: bool,
    pub view: ViewTransform,
    pub frames: u64,
    /// Engine-side timings.
    pub engine: LatencyStats,
    /// Frame arrival at the engine to receipt by a subscriber, per sample.
    pub sink: Distribution,
    pub display_dropped: u64,
    pub processing_budget_ms: f64,
    pub end_to_end_budget_ms: f64,
    pub within_budget: bool,
}

/// Runs the threaded engine on a simulated source for `duration_s` with one
/// display subscriber and a discarding log.
pub fn bench_latency(sensor: &SensorConfig, view: ViewTransform, duration_s: f64, paced: bool) -> Result<LatencyBench, EngineError> {
    let cfg = EngineConfig {
        meta: tremor_core::session::SessionMeta::new("bench"),
        sensor: sensor.clone(),
        view: view.clone(),
        ..EngineConfig::default()
    };
    let log = ThreadedLog::spawn(LogWriter::new(std::io::sink())?);
    let handle = EngineHandle::spawn(Engine::new(cfg, Box::new(log))?);
    let client = handle.client();
    let sink = client.subscribe_with(1024)?;
    let consumer = {
        let sink = sink.clone();
        std::thread::spawn(move || {
            let mut ms = Vec::new();
            loop {
                match sink.recv_timeout(std::time::Duration::from_millis(500)) {
                    Ok(SinkMessage::View(b)) => {
                        let now = Instant::now();
                        ms.extend(b.source_times.iter().map(|t| now.duration_since(*t).as_secs_f64() * 1e3));
                    }
                    Ok(SinkMessage::Event(_)) | Err(RecvTimeout::Timeout) => {}
                    Err(RecvTimeout::Closed) => break,
                }
            }
            ms
        })
    };
    let scenarios = MotorTaskKind::BUILTIN
        .iter()
        .enumerate()
        .map(|(i, k)| TaskScenario::default_for(k, 100 + i as u64))
        .collect();
    let n = (duration_s * sensor.fs).round() as usize;
    let frames = ScenarioCycle::new(scenarios, sensor.clone()).take(n);
    let stop = Arc::new(AtomicBool::new(false));
    let rate = if paced { sensor.fs } else { f64::INFINITY };
    let src = spawn_paced(frames, rate, client.clone(), stop, true);
    let _ = src.join();
    let summary = handle.wait()?;
    let sink_ms = consumer.join().unwrap_or_default();
    let sink_dist = Distribution::from_samples(&sink_ms);
    Ok(LatencyBench {
        fs: sensor.fs,
        paced,
        view,
        frames: summary.frames,
        engine: summary.latency,
        within_budget: summary.latency.processing.mean_ms <= PROCESSING_BUDGET_MS
            && sink_dist.p95_ms < END_TO_END_BUDGET_MS,
        sink: sink_dist,
        display_dropped: sink.dropped(),
        processing_budget_ms: PROCESSING_BUDGET_MS,
        end_to_end_budget_ms: END_TO_END_BUDGET_MS,
    })
}

impl LatencyBench {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{} frames at {} SPS ({}), view {}\n",
            self.frames,
            self.fs,
            if self.paced { "paced" } else { "unpaced" },
            self.view.name()
        );
        let row = |s: &mut String, name: &str, d: &Distribution| {
            let _ = writeln!(
                s,
                "{:<28} mean {:>9.4} ms  p95 {:>9.4} ms  max {:>9.4} ms  (n = {})",
                name, d.mean_ms, d.p95_ms, d.max_ms, d.count
            );
        };
        row(&mut s, "processing per sample", &self.engine.processing);
        row(&mut s, "source to display queue", &self.engine.end_to_end);
        row(&mut s, "source to subscriber", &self.sink);
        let _ = writeln!(s, "display batches dropped: {}", self.display_dropped);
        let _ = writeln!(
            s,
            "budget: mean processing <= {} ms, p95 source to subscriber < {} ms: {}",
            self.processing_budget_ms,
            self.end_to_end_budget_ms,
            if self.within_budget { "met" } else { "NOT met" }
        );
        s
    }
}
