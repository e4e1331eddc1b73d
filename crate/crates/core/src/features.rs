//! Spectral feature pipeline: mid-position segmentation, band-pass,
//! periodogram or STFT power, per-block unit-sum normalization and
//! concatenation over the nine IMU axes.

use std::fmt;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::filter::{design_filter, FilterSpec};
use crate::dsp::{periodogram_slice, stft, DspError, Spectrum, Taper, TimeSeries};
use crate::imu::{ImuRecording, N_CHANNELS};
use crate::session::MotorTaskKind;
use crate::sim::{SyntheticSession, TaskSpan};

const BAND_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("span shorter than segment: {span} < {needed} samples")]
    SpanTooShort { span: usize, needed: usize },
    #[error("span {start}..{end} outside recording of {len} samples")]
    SpanOutOfRange { start: usize, end: usize, len: usize },
    #[error("mixed feature layouts: {0} vs {1}")]
    MixedLayout(String, String),
    #[error("no frequency bins inside the band [{0}, {1}] Hz")]
    EmptyBand(f64, f64),
    #[error("dataset file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// One periodogram over the whole segment.
    Fft,
    /// Short-time spectra concatenated window by window.
    #[default]
    Stft,
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::Fft => "fft",
            FeatureMode::Stft => "stft",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub mode: FeatureMode,
    pub segment_s: f64,
    pub window_s: f64,
    pub hop_s: f64,
    /// Retained bin centers, Hz, inclusive.
    pub band: (f64, f64),
    pub filter: FilterSpec,
    #[serde(default)]
    pub taper: Taper,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            mode: FeatureMode::Stft,
            segment_s: 5.0,
            window_s: 3.0,
            hop_s: 1.0,
            band: (0.25, 20.0),
            filter: FilterSpec::feature_bandpass(),
            taper: Taper::Rectangular,
        }
    }
}

impl FeatureConfig {
    pub fn fft() -> Self {
        Self {
            mode: FeatureMode::Fft,
            ..Self::default()
        }
    }
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSource {
    pub session_id: String,
    pub task_index: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub label: MotorTaskKind,
    pub channels: ImuRecording,
    pub source: SegmentSource,
}

/// Half-open window of `len` samples centered in `span`.
pub fn mid_window(span: Range<usize>, len: usize) -> Result<Range<usize>, FeatureError> {
    let span_len = span.end.saturating_sub(span.start);
    if span_len < len {
        return Err(FeatureError::SpanTooShort {
            span: span_len,
            needed: len,
        });
    }
    let start = span.start + (span_len - len) / 2;
    Ok(start..start + len)
}

pub fn segment_mid(
    recording: &ImuRecording,
    span: Range<usize>,
    duration_s: f64,
    label: MotorTaskKind,
    source: SegmentSource,
) -> Result<Segment, FeatureError> {
    if span.end > recording.len() || span.start > span.end {
        return Err(FeatureError::SpanOutOfRange {
            start: span.start,
            end: span.end,
            len: recording.len(),
        });
    }
    let n = (duration_s * recording.fs).round() as usize;
    let w = mid_window(span, n)?;
    Ok(Segment {
        label,
        channels: recording.slice(w),
        source,
    })
}

// ---------------------------------------------------------------------------
// Layout
// ---------------------------------------------------------------------------

/// Map between flat feature positions and (axis, window, bin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub mode: FeatureMode,
    pub axes: usize,
    pub windows: usize,
    pub bins: usize,
    /// Center frequency of retained bin 0, Hz.
    pub f_first: f64,
    pub delta_f: f64,
}

impl FeatureLayout {
    pub fn len(&self) -> usize {
        self.axes * self.windows * self.bins
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, axis: usize, window: usize, bin: usize) -> usize {
        debug_assert!(axis < self.axes && window < self.windows && bin < self.bins);
        (axis * self.windows + window) * self.bins + bin
    }

    pub fn position(&self, index: usize) -> (usize, usize, usize) {
        let bin = index % self.bins;
        let block = index / self.bins;
        (block / self.windows, block % self.windows, bin)
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        self.f_first + bin as f64 * self.delta_f
    }

    /// Single-line text form, e.g. `mode=stft axes=9 windows=3 bins=60 f0=0.3333333333333333 df=0.3333333333333333`.
    pub fn descriptor(&self) -> String {
        format!(
            "mode={} axes={} windows={} bins={} f0={} df={}",
            self.mode, self.axes, self.windows, self.bins, self.f_first, self.delta_f
        )
    }

    pub fn parse_descriptor(s: &str) -> Option<Self> {
        let mut mode = None;
        let (mut axes, mut windows, mut bins, mut f0, mut df) = (None, None, None, None, None);
        for kv in s.split_whitespace() {
            let (k, v) = kv.split_once('=')?;
            match k {
                "mode" => {
                    mode = Some(match v {
                        "fft" => FeatureMode::Fft,
                        "stft" => FeatureMode::Stft,
                        _ => return None,
                    })
                }
                "axes" => axes = v.parse().ok(),
                "windows" => windows = v.parse().ok(),
                "bins" => bins = v.parse().ok(),
                "f0" => f0 = v.parse().ok(),
                "df" => df = v.parse().ok(),
                _ => return None,
            }
        }
        Some(Self {
            mode: mode?,
            axes: axes?,
            windows: windows?,
            bins: bins?,
            f_first: f0?,
            delta_f: df?,
        })
    }

    /// FNV-1a hash of the descriptor, used to tie models to a layout.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in self.descriptor().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: FeatureLayout,
    /// (axis, window) blocks with zero raw power, left all-zero.
    pub degenerate_blocks: Vec<(usize, usize)>,
}

impl FeatureVector {
    pub fn block(&self, axis: usize, window: usize) -> &[f64] {
        let i = self.layout.index(axis, window, 0);
        &self.values[i..i + self.layout.bins]
    }
}

fn band_bins(spec: &Spectrum, band: (f64, f64)) -> Range<usize> {
    let lo = spec
        .power
        .iter()
        .enumerate()
        .position(|(k, _)| spec.frequency(k) >= band.0 - BAND_EPS)
        .unwrap_or(spec.power.len());
    let hi = (lo..spec.power.len())
        .take_while(|&k| spec.frequency(k) <= band.1 + BAND_EPS)
        .last()
        .map_or(lo, |k| k + 1);
    lo..hi
}

/// Feature vector of a segment: per axis remove the mean, band-pass,
/// take power spectra, keep in-band bins and scale each (axis, window)
/// block to unit sum.
pub fn extract_features(seg: &Segment, config: &FeatureConfig) -> Result<FeatureVector, FeatureError> {
    let fs = seg.channels.fs;
    let coeffs = design_filter(&config.filter, fs)?;
    let mut values = Vec::new();
    let mut degenerate = Vec::new();
    let mut layout: Option<FeatureLayout> = None;

    for axis in 0..N_CHANNELS {
        let x = &seg.channels.channels[axis];
        if x.is_empty() {
            return Err(DspError::TooShort { needed: 1, got: 0 }.into());
        }
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
        let filtered = coeffs.stream().process(&centered);
        let spectra = match config.mode {
            FeatureMode::Fft => vec![periodogram_slice(&filtered, fs, filtered.len())?],
            FeatureMode::Stft => stft(&TimeSeries::new(filtered, fs)?, config.window_s, config.hop_s, config.taper)?,
        };
        if spectra.is_empty() {
            return Err(DspError::InvalidWindow("no STFT windows".into()).into());
        }
        let bins = band_bins(&spectra[0], config.band);
        if bins.is_empty() {
            return Err(FeatureError::EmptyBand(config.band.0, config.band.1));
        }
        if layout.is_none() {
            layout = Some(FeatureLayout {
                mode: config.mode,
                axes: N_CHANNELS,
                windows: spectra.len(),
                bins: bins.len(),
                f_first: spectra[0].frequency(bins.start),
                delta_f: spectra[0].delta_f,
            });
        }
        for (w, spec) in spectra.iter().enumerate() {
            let block = &spec.power[bins.clone()];
            let total: f64 = block.iter().sum();
            if total > 0.0 && total.is_finite() {
                values.extend(block.iter().map(|p| p / total));
            } else {
                degenerate.push((axis, w));
                values.extend(std::iter::repeat_n(0.0, block.len()));
            }
        }
    }
    Ok(FeatureVector {
        values,
        layout: layout.expect("nine axes processed"),
        degenerate_blocks: degenerate,
    })
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// A recorded session with its closed task spans.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecording {
    pub session_id: String,
    pub recording: ImuRecording,
    pub tasks: Vec<TaskSpan>,
}

impl From<&SyntheticSession> for SessionRecording {
    fn from(s: &SyntheticSession) -> Self {
        Self {
            session_id: s.session_id.clone(),
            recording: s.recording.clone(),
            tasks: s.tasks.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    /// Index into `labels`.
    pub y: Vec<usize>,
    pub labels: Vec<MotorTaskKind>,
    pub layout: Option<FeatureLayout>,
    pub sources: Vec<SegmentSource>,
}

impl Dataset {
    pub fn empty() -> Self {
        Self {
            x: Vec::new(),
            y: Vec::new(),
            labels: Vec::new(),
            layout: None,
            sources: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.labels.len()];
        for &y in &self.y {
            c[y] += 1;
        }
        c
    }

    /// Builds a dataset from labelled rows; class indices follow the
    /// natural task order (RP, PP, FN, HM, then custom labels).
    pub fn from_rows(rows: Vec<(MotorTaskKind, Vec<f64>)>, layout: Option<FeatureLayout>) -> Self {
        let mut labels: Vec<MotorTaskKind> = rows.iter().map(|(l, _)| l.clone()).collect();
        labels.sort();
        labels.dedup();
        let mut ds = Self::empty();
        ds.layout = layout;
        for (i, (label, x)) in rows.into_iter().enumerate() {
            ds.y.push(labels.binary_search(&label).expect("label collected"));
            ds.x.push(x);
            ds.sources.push(SegmentSource {
                session_id: String::new(),
                task_index: i as u32 + 1,
            });
        }
        ds.labels = labels;
        ds
    }

    /// Rows at the given indices, keeping the label set.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            labels: self.labels.clone(),
            layout: self.layout.clone(),
            sources: idx.iter().map(|&i| self.sources[i].clone()).collect(),
        }
    }

    /// Writes the layout header then one `label,v0,v1,…` row per segment.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str("# layout ");
        s.push_str(&self.layout.as_ref().map_or_else(|| "none".to_string(), FeatureLayout::descriptor));
        s.push('\n');
        for (x, &y) in self.x.iter().zip(&self.y) {
            s.push_str(self.labels[y].label());
            for v in x {
                s.push(',');
                s.push_str(&v.to_string());
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Dataset, FeatureError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(FeatureError::Parse {
            line: 1,
            msg: "missing layout header".into(),
        })?;
        let desc = header.strip_prefix("# layout ").ok_or(FeatureError::Parse {
            line: 1,
            msg: "header must start with '# layout '".into(),
        })?;
        let layout = if desc.trim() == "none" {
            None
        } else {
            Some(FeatureLayout::parse_descriptor(desc).ok_or(FeatureError::Parse {
                line: 1,
                msg: format!("bad layout descriptor {desc:?}"),
            })?)
        };
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let label = fields.next().unwrap_or("").trim();
            if label.is_empty() {
                return Err(FeatureError::Parse {
                    line: i + 1,
                    msg: "empty label".into(),
                });
            }
            let kind = MotorTaskKind::builtin(label).unwrap_or_else(|| MotorTaskKind::Custom(label.to_string()));
            let values = fields
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| FeatureError::Parse {
                    line: i + 1,
                    msg: e.to_string(),
                })?;
            if let Some(l) = &layout {
                if values.len() != l.len() {
                    return Err(FeatureError::Parse {
                        line: i + 1,
                        msg: format!("{} values, layout has {}", values.len(), l.len()),
                    });
                }
            }
            rows.push((kind, values));
        }
        Ok(Dataset::from_rows(rows, layout))
    }
}

/// Segments every task span, extracts features in parallel and returns rows
/// sorted by (session id, task index).
pub fn build_dataset(sessions: &[SessionRecording], config: &FeatureConfig) -> Result<Dataset, FeatureError> {
    let mut jobs: Vec<(&SessionRecording, u32, &TaskSpan)> = sessions
        .iter()
        .flat_map(|s| s.tasks.iter().enumerate().map(move |(i, t)| (s, i as u32 + 1, t)))
        .collect();
    jobs.sort_by(|a, b| (&a.0.session_id, a.1).cmp(&(&b.0.session_id, b.1)));

    let vectors: Vec<(MotorTaskKind, SegmentSource, FeatureVector)> = jobs
        .par_iter()
        .map(|(s, idx, span)| {
            let source = SegmentSource {
                session_id: s.session_id.clone(),
                task_index: *idx,
            };
            let seg = segment_mid(&s.recording, span.start..span.end, config.segment_s, span.task.clone(), source.clone())?;
            let fv = extract_features(&seg, config)?;
            Ok((span.task.clone(), source, fv))
        })
        .collect::<Result<_, FeatureError>>()?;

    if vectors.is_empty() {
        return Ok(Dataset::empty());
    }
    let layout = vectors[0].2.layout.clone();
    for (_, _, v) in &vectors {
        if v.layout != layout {
            return Err(FeatureError::MixedLayout(layout.descriptor(), v.layout.descriptor()));
        }
    }
    let sources: Vec<SegmentSource> = vectors.iter().map(|(_, s, _)| s.clone()).collect();
    let mut ds = Dataset::from_rows(
        vectors.into_iter().map(|(k, _, v)| (k, v.values)).collect(),
        Some(layout),
    );
    ds.sources = sources;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imu::SensorConfig;
    use crate::sim::{synth_task, TaskScenario};

    fn source() -> SegmentSource {
        SegmentSource {
            session_id: "s".into(),
            task_index: 1,
        }
    }

    #[test]
    fn mid_window_arithmetic() {
        assert_eq!(mid_window(0..2400, 1000).unwrap(), 700..1700);
        assert_eq!(mid_window(100..1100, 1000).unwrap(), 100..1100);
        let e = mid_window(0..980, 1000).unwrap_err();
        assert!(e.to_string().starts_with("span shorter than segment"));
    }

    fn posture_segment() -> Segment {
        let rec = synth_task(&TaskScenario::posture(4), &SensorConfig::default()).unwrap();
        segment_mid(&rec, 0..rec.len(), 5.0, MotorTaskKind::Posture, source()).unwrap()
    }

    #[test]
    fn vector_lengths() {
        let seg = posture_segment();
        assert_eq!(seg.channels.len(), 1000);
        let fft = extract_features(&seg, &FeatureConfig::fft()).unwrap();
        assert_eq!(fft.layout.bins, 99);
        assert_eq!(fft.values.len(), 891);
        assert!((fft.layout.f_first - 0.4).abs() < 1e-12);
        let st = extract_features(&seg, &FeatureConfig::default()).unwrap();
        assert_eq!((st.layout.windows, st.layout.bins), (3, 60));
        assert_eq!(st.values.len(), 1620);
    }

    #[test]
    fn blocks_sum_to_one_and_zero_blocks_flagged() {
        let mut seg = posture_segment();
        seg.channels.channels[5] = vec![0.0; 1000];
        let fv = extract_features(&seg, &FeatureConfig::default()).unwrap();
        for a in 0..9 {
            for w in 0..3 {
                let s: f64 = fv.block(a, w).iter().sum();
                if a == 5 {
                    assert_eq!(s, 0.0);
                } else {
                    assert!((s - 1.0).abs() < 1e-9);
                }
            }
        }
        assert_eq!(fv.degenerate_blocks, vec![(5, 0), (5, 1), (5, 2)]);
    }

    #[test]
    fn layout_is_a_bijection() {
        let l = FeatureLayout {
            mode: FeatureMode::Stft,
            axes: 9,
            windows: 3,
            bins: 60,
            f_first: 1.0 / 3.0,
            delta_f: 1.0 / 3.0,
        };
        for i in 0..l.len() {
            let (a, w, b) = l.position(i);
            assert_eq!(l.index(a, w, b), i);
        }
        assert_eq!(FeatureLayout::parse_descriptor(&l.descriptor()).unwrap(), l);
    }

    #[test]
    fn csv_round_trip() {
        let ds = Dataset::from_rows(
            vec![
                (MotorTaskKind::FingerToNose, vec![0.25, 0.75]),
                (MotorTaskKind::Rest, vec![1.0 / 3.0, 2.0 / 3.0]),
            ],
            None,
        );
        let back = Dataset::from_csv(&ds.to_csv()).unwrap();
        assert_eq!(back.x, ds.x);
        assert_eq!(back.y, ds.y);
        assert_eq!(back.labels, vec![MotorTaskKind::Rest, MotorTaskKind::FingerToNose]);
    }

    #[test]
    fn empty_dataset() {
        let ds = build_dataset(&[], &FeatureConfig::default()).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.n_classes(), 0);
    }
}
