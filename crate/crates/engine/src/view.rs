//! Streaming view transforms for the strip chart.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};
use tremor_core::dsp::filter::{design_filter, FilterResponse, FilterSpec, SosFilter};
use tremor_core::dsp::DspError;
use tremor_core::imu::{Channel, SensorGroup, N_CHANNELS};

/// Half length of the FIR Hilbert transformer; the envelope lags the input
/// by this many samples.
pub const HILBERT_HALF_TAPS: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum ViewTransform {
    #[default]
    Raw,
    Filtered { filter: FilterSpec },
    Norm,
    Envelope,
    /// Principal component scores per sensor group over a sliding window.
    Pca { window: usize },
    /// Mean square per axis over a sliding window.
    ShortTermPower { window: usize },
}


impl ViewTransform {
    /// Two-pole Chebyshev band-pass offered by the filter checkbox.
    pub fn chebyshev_bandpass() -> Self {
        ViewTransform::Filtered {
            filter: FilterSpec::chebyshev(2, FilterResponse::Bandpass(1.0, 20.0)),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ViewTransform::Raw => "raw",
            ViewTransform::Filtered { .. } => "filtered",
            ViewTransform::Norm => "norm",
            ViewTransform::Envelope => "envelope",
            ViewTransform::Pca { .. } => "pca",
            ViewTransform::ShortTermPower { .. } => "short_term_power",
        }
    }

    /// Wire code used in binary view batches.
    pub fn code(&self) -> u8 {
        match self {
            ViewTransform::Raw => 0,
            ViewTransform::Filtered { .. } => 1,
            ViewTransform::Norm => 2,
            ViewTransform::Envelope => 3,
            ViewTransform::Pca { .. } => 4,
            ViewTransform::ShortTermPower { .. } => 5,
        }
    }

    pub fn validate(&self, fs: f64) -> Result<(), DspError> {
        match self {
            ViewTransform::Filtered { filter } => filter.validate(fs),
            ViewTransform::Pca { window } if *window < 2 => {
                Err(DspError::InvalidWindow("PCA window needs at least two samples".into()))
            }
            ViewTransform::ShortTermPower { window } if *window == 0 => {
                Err(DspError::InvalidWindow("window must be at least one sample".into()))
            }
            _ => Ok(()),
        }
    }

    /// Names of the output channels, in output order.
    pub fn channel_names(&self) -> Vec<String> {
        match self {
            ViewTransform::Norm => SensorGroup::ALL.iter().map(|g| format!("{}_norm", group_name(*g))).collect(),
            ViewTransform::Pca { .. } => SensorGroup::ALL
                .iter()
                .flat_map(|g| (1..=3).map(move |k| format!("{}_pc{k}", group_name(*g))))
                .collect(),
            _ => Channel::all().map(Channel::name).collect(),
        }
    }

    /// True when every output channel maps to one input axis.
    pub fn per_axis(&self) -> bool {
        !matches!(self, ViewTransform::Norm | ViewTransform::Pca { .. })
    }
}

fn group_name(g: SensorGroup) -> &'static str {
    match g {
        SensorGroup::Accel => "accel",
        SensorGroup::Gyro => "gyro",
        SensorGroup::Mag => "mag",
    }
}

/// Causal FIR Hilbert transformer (Hamming window) with a matched delay line.
#[derive(Debug, Clone)]
struct HilbertFir {
    taps: Vec<f64>,
    hist: VecDeque<f64>,
}

impl HilbertFir {
    fn new() -> Self {
        let m = HILBERT_HALF_TAPS as isize;
        let len = 2 * HILBERT_HALF_TAPS + 1;
        let taps = (0..len as isize)
            .map(|i| {
                let k = i - m;
                if k % 2 == 0 {
                    0.0
                } else {
                    let w = 0.54 + 0.46 * (PI * k as f64 / m as f64).cos();
                    2.0 / (PI * k as f64) * w
                }
            })
            .collect();
        Self {
            taps,
            hist: VecDeque::from(vec![0.0; len]),
        }
    }

    fn envelope(&mut self, x: f64) -> f64 {
        self.hist.pop_front();
        self.hist.push_back(x);
        // hist[len-1] is the newest sample; tap i pairs with x[n - i].
        let len = self.taps.len();
        let q: f64 = self
            .taps
            .iter()
            .enumerate()
            .map(|(i, h)| h * self.hist[len - 1 - i])
            .sum();
        let i = self.hist[len - 1 - HILBERT_HALF_TAPS];
        (i * i + q * q).sqrt()
    }
}

#[derive(Debug, Clone)]
struct SlidingPower {
    window: usize,
    buf: VecDeque<f64>,
    sum: f64,
    since_refresh: usize,
}

impl SlidingPower {
    fn new(window: usize) -> Self {
        Self {
            window,
            buf: VecDeque::with_capacity(window + 1),
            sum: 0.0,
            since_refresh: 0,
        }
    }

    /// Mean square over the last `window` samples (fewer at start-up).
    fn push(&mut self, x: f64) -> f64 {
        let sq = x * x;
        self.buf.push_back(sq);
        self.sum += sq;
        if self.buf.len() > self.window {
            self.sum -= self.buf.pop_front().unwrap();
        }
        self.since_refresh += 1;
        if self.since_refresh >= self.window {
            self.sum = self.buf.iter().sum();
            self.since_refresh = 0;
        }
        self.sum.max(0.0) / self.buf.len() as f64
    }
}

#[derive(Debug, Clone)]
struct SlidingPca {
    window: usize,
    buf: VecDeque<[f64; 3]>,
}

impl SlidingPca {
    fn new(window: usize) -> Self {
        Self {
            window,
            buf: VecDeque::with_capacity(window + 1),
        }
    }

    fn push(&mut self, x: [f64; 3]) -> [f64; 3] {
        self.buf.push_back(x);
        if self.buf.len() > self.window {
            self.buf.pop_front();
        }
        let n = self.buf.len() as f64;
        if self.buf.len() < 2 {
            return [0.0; 3];
        }
        let mut mean = [0.0; 3];
        for s in &self.buf {
            for j in 0..3 {
                mean[j] += s[j] / n;
            }
        }
        let mut cov = Matrix3::<f64>::zeros();
        for s in &self.buf {
            for a in 0..3 {
                for b in a..3 {
                    cov[(a, b)] += (s[a] - mean[a]) * (s[b] - mean[b]);
                }
            }
        }
        for a in 0..3 {
            for b in a..3 {
                cov[(a, b)] /= n - 1.0;
                cov[(b, a)] = cov[(a, b)];
            }
        }
        let eig = SymmetricEigen::new(cov);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let centered = [x[0] - mean[0], x[1] - mean[1], x[2] - mean[2]];
        let mut out = [0.0; 3];
        for (slot, &k) in order.iter().enumerate() {
            let v = eig.eigenvectors.column(k);
            let lead = v.iter().copied().fold(0.0f64, |m, e| if e.abs() > m.abs() { e } else { m });
            let sign = if lead < 0.0 { -1.0 } else { 1.0 };
            out[slot] = sign * (0..3).map(|j| v[j] * centered[j]).sum::<f64>();
        }
        out
    }
}

#[derive(Debug, Clone)]
enum State {
    Raw,
    Filtered(Vec<SosFilter>),
    Norm,
    Envelope(Vec<HilbertFir>),
    Pca(Vec<SlidingPca>),
    Power(Vec<SlidingPower>),
}

/// Per-sample view processor. A new processor starts from rest, so a view
/// change restarts any filter state at the sample it takes effect.
#[derive(Debug, Clone)]
pub struct ViewProcessor {
    transform: ViewTransform,
    state: State,
}

impl ViewProcessor {
    pub fn new(transform: &ViewTransform, fs: f64) -> Result<Self, DspError> {
        transform.validate(fs)?;
        let state = match transform {
            ViewTransform::Raw => State::Raw,
            ViewTransform::Filtered { filter } => {
                let c = design_filter(filter, fs)?;
                State::Filtered((0..N_CHANNELS).map(|_| c.stream()).collect())
            }
            ViewTransform::Norm => State::Norm,
            ViewTransform::Envelope => State::Envelope((0..N_CHANNELS).map(|_| HilbertFir::new()).collect()),
            ViewTransform::Pca { window } => State::Pca((0..3).map(|_| SlidingPca::new(*window)).collect()),
            ViewTransform::ShortTermPower { window } => {
                State::Power((0..N_CHANNELS).map(|_| SlidingPower::new(*window)).collect())
            }
        };
        Ok(Self {
            transform: transform.clone(),
            state,
        })
    }

    pub fn transform(&self) -> &ViewTransform {
        &self.transform
    }

    pub fn width(&self) -> usize {
        match self.state {
            State::Norm => 3,
            _ => N_CHANNELS,
        }
    }

    /// Appends the view of one sample to `out`.
    pub fn process(&mut self, x: &[f64; N_CHANNELS], out: &mut Vec<f64>) {
        match &mut self.state {
            State::Raw => out.extend_from_slice(x),
            State::Filtered(f) => out.extend(f.iter_mut().zip(x).map(|(f, v)| f.process_sample(*v))),
            State::Norm => {
                for g in 0..3 {
                    let s = &x[3 * g..3 * g + 3];
                    out.push((s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt());
                }
            }
            State::Envelope(h) => out.extend(h.iter_mut().zip(x).map(|(h, v)| h.envelope(*v))),
            State::Pca(p) => {
                for (g, p) in p.iter_mut().enumerate() {
                    out.extend(p.push([x[3 * g], x[3 * g + 1], x[3 * g + 2]]));
                }
            }
            State::Power(p) => out.extend(p.iter_mut().zip(x).map(|(p, v)| p.push(*v))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tremor_core::dsp::{hilbert_envelope, pca_scores, short_term_power, TimeSeries};

    fn run(t: &ViewTransform, xs: &[[f64; 9]]) -> Vec<Vec<f64>> {
        let mut p = ViewProcessor::new(t, 200.0).unwrap();
        xs.iter()
            .map(|x| {
                let mut o = Vec::new();
                p.process(x, &mut o);
                o
            })
            .collect()
    }

    fn sine(n: usize, f: f64, a: f64) -> Vec<[f64; 9]> {
        (0..n)
            .map(|i| {
                let v = a * (2.0 * PI * f * i as f64 / 200.0).sin();
                std::array::from_fn(|c| v * (c + 1) as f64)
            })
            .collect()
    }

    #[test]
    fn filtered_matches_offline_filter() {
        let t = ViewTransform::chebyshev_bandpass();
        let xs = sine(400, 5.0, 1.0);
        let out = run(&t, &xs);
        let ViewTransform::Filtered { filter } = &t else { unreachable!() };
        let col: Vec<f64> = xs.iter().map(|x| x[4]).collect();
        let offline = design_filter(filter, 200.0).unwrap().stream().process(&col);
        for (o, w) in out.iter().zip(&offline) {
            assert_eq!(o[4].to_bits(), w.to_bits());
        }
    }

    #[test]
    fn norm_of_gravity() {
        let out = run(&ViewTransform::Norm, &[[0.0, 600.0, 800.0, 3.0, 4.0, 0.0, 0.0, 0.0, 2.0]]);
        assert_eq!(out[0], vec![1000.0, 5.0, 2.0]);
    }

    #[test]
    fn short_term_power_agrees_with_batch() {
        let xs = sine(300, 7.0, 2.0);
        let out = run(&ViewTransform::ShortTermPower { window: 40 }, &xs);
        let col: Vec<f64> = xs.iter().map(|x| x[0]).collect();
        let batch = short_term_power(&TimeSeries::new(col, 200.0).unwrap(), 40).unwrap();
        for (i, b) in batch.samples.iter().enumerate() {
            assert!((out[i + 39][0] - b).abs() < 1e-12);
        }
    }

    #[test]
    fn envelope_of_tone_is_flat() {
        let xs = sine(600, 10.0, 3.0);
        let out = run(&ViewTransform::Envelope, &xs);
        let col: Vec<f64> = xs.iter().map(|x| x[0]).collect();
        let offline = hilbert_envelope(&TimeSeries::new(col, 200.0).unwrap()).unwrap();
        for i in 100..500 {
            // 31 taps leave a few percent of passband droop at 10 Hz
            assert!((out[i][0] - 3.0).abs() < 0.1, "{i} {}", out[i][0]);
            assert!((out[i][0] - offline.samples[i - HILBERT_HALF_TAPS]).abs() < 0.1);
        }
    }

    #[test]
    fn pca_agrees_with_batch_on_full_window() {
        let xs: Vec<[f64; 9]> = (0..50)
            .map(|i| {
                let a = (i as f64 * 0.37).sin();
                let b = (i as f64 * 1.1).cos();
                [3.0 * a, a + 0.2 * b, b, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]
            })
            .collect();
        let out = run(&ViewTransform::Pca { window: 50 }, &xs);
        let ch: Vec<Vec<f64>> = (0..3).map(|c| xs.iter().map(|x| x[c]).collect()).collect();
        let refs: Vec<&[f64]> = ch.iter().map(Vec::as_slice).collect();
        let r = pca_scores(&refs).unwrap();
        for k in 0..3 {
            assert!((out[49][k] - r.scores[k][49]).abs() < 1e-9, "pc{k}");
        }
        assert!(out[49][6..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn names_and_validation() {
        assert_eq!(ViewTransform::Norm.channel_names(), vec!["accel_norm", "gyro_norm", "mag_norm"]);
        assert_eq!(ViewTransform::Pca { window: 4 }.channel_names()[4], "gyro_pc2");
        assert!(ViewTransform::ShortTermPower { window: 0 }.validate(200.0).is_err());
        let json = serde_json::to_string(&ViewTransform::chebyshev_bandpass()).unwrap();
        let back: ViewTransform = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ViewTransform::chebyshev_bandpass());
    }
}
