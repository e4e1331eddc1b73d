//! Per-task pre-analysis: time and frequency statistics per axis and per
//! sensor-group norm.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use tremor_core::dsp::{peak_stats_slice, periodogram_slice, psd_from_rms, rms_detrended_slice};
use tremor_core::imu::{Channel, ImuRecording, SensorGroup};
use tremor_core::session::{format_event, AnnotationEvent};
use tremor_core::sim::group_norm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub channel: String,
    pub unit: String,
    pub rms: f64,
    pub peak_to_peak: f64,
    pub abs_peak: f64,
    /// RMS over the square root of the sampling rate, unit per √Hz.
    pub psd: f64,
    /// Periodogram peak above DC; `None` when the detrended signal is zero.
    pub dominant_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task_index: u32,
    pub task: String,
    pub event: String,
    pub sample_start: u64,
    pub sample_end: u64,
    /// Frames actually present in the span.
    pub samples: usize,
    pub channels: Vec<ChannelStats>,
}

impl TaskReport {
    pub fn channel(&self, name: &str) -> Option<&ChannelStats> {
        self.channels.iter().find(|c| c.channel == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreAnalysisReport {
    pub fs: f64,
    pub tasks: Vec<TaskReport>,
}

/// Statistics of one series. Used for axes and norms alike.
pub fn channel_stats(name: &str, unit: &str, x: &[f64], fs: f64) -> ChannelStats {
    if x.len() < 2 {
        return ChannelStats {
            channel: name.to_string(),
            unit: unit.to_string(),
            rms: 0.0,
            peak_to_peak: 0.0,
            abs_peak: x.first().map_or(0.0, |v| v.abs()),
            psd: 0.0,
            dominant_hz: None,
        };
    }
    let rms = rms_detrended_slice(x).expect("non-empty");
    let peaks = peak_stats_slice(x).expect("non-empty");
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let dominant_hz = if centered.iter().all(|v| *v == 0.0) {
        None
    } else {
        let spec = periodogram_slice(&centered, fs, x.len()).expect("valid periodogram");
        spec.argmax_from(1)
            .filter(|&k| spec.power[k] > 0.0)
            .map(|k| spec.frequency(k))
    };
    ChannelStats {
        channel: name.to_string(),
        unit: unit.to_string(),
        rms,
        peak_to_peak: peaks.peak_to_peak,
        abs_peak: peaks.abs_peak,
        psd: psd_from_rms(rms, fs).expect("positive rate"),
        dominant_hz,
    }
}

/// Report over every closed task. `sample_index[i]` is the sample index of
/// row `i` of `recording` (increasing; gaps allowed).
pub fn pre_analysis_report(recording: &ImuRecording, sample_index: &[u64], events: &[AnnotationEvent]) -> PreAnalysisReport {
    assert_eq!(recording.len(), sample_index.len());
    let fs = recording.fs;
    let tasks = events
        .iter()
        .filter_map(|e| {
            let range = e.sample_range()?;
            let lo = sample_index.partition_point(|&t| t < range.start);
            let hi = sample_index.partition_point(|&t| t < range.end);
            let seg = recording.slice(lo..hi);
            let mut channels: Vec<ChannelStats> = Channel::all()
                .map(|c| channel_stats(&c.name(), c.group().unit(), &seg.channels[c.0], fs))
                .collect();
            for g in SensorGroup::ALL {
                let name = format!("{}_norm", g.channels()[0].name().split('_').next().unwrap());
                channels.push(channel_stats(&name, g.unit(), &group_norm(&seg, g), fs));
            }
            Some(TaskReport {
                task_index: e.task_index,
                task: e.task.label().to_string(),
                event: format_event(e),
                sample_start: range.start,
                sample_end: range.end,
                samples: hi - lo,
                channels,
            })
        })
        .collect();
    PreAnalysisReport { fs, tasks }
}

impl PreAnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if self.tasks.is_empty() {
            s.push_str("no closed motor tasks\n");
        }
        for t in &self.tasks {
            let _ = writeln!(
                s,
                "task {}  {}  samples {}..{} ({} frames, {:.2} s)",
                t.task_index,
                t.event,
                t.sample_start,
                t.sample_end,
                t.samples,
                t.samples as f64 / self.fs
            );
            let _ = writeln!(
                s,
                "  {:<12} {:>12} {:>12} {:>12} {:>12} {:>9}  unit",
                "channel", "rms", "pk-pk", "abs peak", "psd/√Hz", "f_dom Hz"
            );
            for c in &t.channels {
                let f = c.dominant_hz.map_or("-".to_string(), |f| format!("{f:.2}"));
                let _ = writeln!(
                    s,
                    "  {:<12} {:>12.4} {:>12.4} {:>12.4} {:>12.5} {:>9}  {}",
                    c.channel, c.rms, c.peak_to_peak, c.abs_peak, c.psd, f, c.unit
                );
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tremor_core::imu::SensorConfig;
    use tremor_core::session::MotorTaskKind;
    use tremor_core::sim::{synth_task, TaskScenario};

    fn event(i: u32, kind: MotorTaskKind, start: u64, end: u64) -> AnnotationEvent {
        let mut e = AnnotationEvent::new(i, kind);
        e.sample_start = Some(start);
        e.sample_end = Some(end);
        e
    }

    #[test]
    fn posture_task_shows_physiological_peak() {
        let rec = synth_task(&TaskScenario::posture(3), &SensorConfig::default()).unwrap();
        let idx: Vec<u64> = (0..rec.len() as u64).collect();
        let r = pre_analysis_report(&rec, &idx, &[event(1, MotorTaskKind::Posture, 0, rec.len() as u64)]);
        let y = r.tasks[0].channel("accel_y").unwrap();
        assert!((y.dominant_hz.unwrap() - 12.7).abs() <= 0.5, "{y:?}");
        assert!((3.0..=7.0).contains(&y.rms), "{}", y.rms);
        assert_eq!(r.tasks[0].channels.len(), 12);
        assert!(r.to_text().contains("1-PP"));
    }

    #[test]
    fn zero_signal_has_no_dominant_frequency() {
        let rec = ImuRecording::zeros(400, 200.0);
        let idx: Vec<u64> = (0..400).collect();
        let r = pre_analysis_report(&rec, &idx, &[event(1, MotorTaskKind::Rest, 100, 300)]);
        assert_eq!(r.tasks[0].samples, 200);
        for c in &r.tasks[0].channels {
            assert_eq!(c.rms, 0.0);
            assert_eq!(c.dominant_hz, None);
        }
        assert!(r.to_text().contains(" -  "));
    }

    #[test]
    fn open_tasks_are_skipped() {
        let rec = ImuRecording::zeros(10, 200.0);
        let idx: Vec<u64> = (0..10).collect();
        let mut e = AnnotationEvent::new(1, MotorTaskKind::Rest);
        e.sample_start = Some(0);
        assert!(pre_analysis_report(&rec, &idx, &[e]).tasks.is_empty());
    }
}
