//! Signal mathematics: detrended RMS and noise density, peak statistics,
//! periodogram, autocorrelation, IIR filters, Hilbert envelope, short-term
//! power, principal component scores and the short-time Fourier transform.

pub mod filter;

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use filter::{
    design_filter, Biquad, FilterFamily, FilterResponse, FilterSpec, SosCoefficients, SosFilter,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("sample rate must be positive and finite, got {0}")]
    InvalidSampleRate(f64),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),
    #[error("input has zero variance")]
    ZeroVariance,
    #[error("cutoff {cutoff} Hz outside (0, {nyquist}) Hz")]
    CutoffOutOfRange { cutoff: f64, nyquist: f64 },
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("channels have unequal lengths")]
    RaggedChannels,
}

/// Uniformly sampled real signal in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub samples: Vec<f64>,
    pub fs: f64,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self, DspError> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(DspError::InvalidSampleRate(fs));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(DspError::NonFinite(i));
        }
        Ok(Self { samples, fs })
    }

    pub fn zeros(n: usize, fs: f64) -> Self {
        Self { samples: vec![0.0; n], fs }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> TimeSeries {
        TimeSeries {
            samples: self.samples[range].to_vec(),
            fs: self.fs,
        }
    }
}

/// One-sided power spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub power: Vec<f64>,
    /// Bin spacing, fs / nfft.
    pub delta_f: f64,
    /// Frequency of the first bin.
    pub f0: f64,
}

impl Spectrum {
    pub fn frequency(&self, bin: usize) -> f64 {
        self.f0 + bin as f64 * self.delta_f
    }

    pub fn total(&self) -> f64 {
        self.power.iter().sum()
    }

    /// Index of the largest bin at or above `min_bin`; ties go to the lower bin.
    pub fn argmax_from(&self, min_bin: usize) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &p) in self.power.iter().enumerate().skip(min_bin) {
            if best.is_none_or(|b| p > self.power[b]) {
                best = Some(i);
            }
        }
        best
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// RMS of the mean-removed signal, `sqrt(1/N Σ (x - mean)^2)`; this is
/// the population standard deviation.
pub fn rms_detrended(x: &TimeSeries) -> Result<f64, DspError> {
    rms_detrended_slice(&x.samples)
}

pub fn rms_detrended_slice(x: &[f64]) -> Result<f64, DspError> {
    if x.len() < 2 {
        return Err(DspError::TooShort { needed: 2, got: x.len() });
    }
    let m = mean(x);
    Ok((x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakStats {
    pub peak_to_peak: f64,
    pub abs_peak: f64,
}

/// Peak-to-peak excursion and largest absolute value of the mean-removed
/// signal.
pub fn peak_stats(x: &TimeSeries) -> Result<PeakStats, DspError> {
    peak_stats_slice(&x.samples)
}

pub fn peak_stats_slice(x: &[f64]) -> Result<PeakStats, DspError> {
    if x.is_empty() {
        return Err(DspError::TooShort { needed: 1, got: 0 });
    }
    let m = mean(x);
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v - m), hi.max(v - m))
    });
    Ok(PeakStats {
        peak_to_peak: hi - lo,
        abs_peak: hi.abs().max(lo.abs()),
    })
}

/// Noise density from RMS noise, `rms / sqrt(bw)`. With `rms` in µg the
/// result is in µg/√Hz.
pub fn psd_from_rms(rms: f64, bw: f64) -> Result<f64, DspError> {
    if !(bw > 0.0) {
        return Err(DspError::InvalidBandwidth(bw));
    }
    Ok(rms / bw.sqrt())
}

fn fft_forward(len: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(len)
}

/// One-sided squared-magnitude spectrum, zero-padded to `nfft` (at least the
/// signal length). Scaling: `|X_k|^2 / (nfft N)`, interior bins doubled, so
/// the bins sum to the mean square `Σ x^2 / N`.
pub fn periodogram(x: &TimeSeries, nfft: usize) -> Result<Spectrum, DspError> {
    periodogram_slice(&x.samples, x.fs, nfft)
}

pub fn periodogram_slice(x: &[f64], fs: f64, nfft: usize) -> Result<Spectrum, DspError> {
    if x.is_empty() {
        return Err(DspError::TooShort { needed: 1, got: 0 });
    }
    let nfft = nfft.max(x.len());
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(nfft, Complex64::new(0.0, 0.0));
    fft_forward(nfft).process(&mut buf);
    let scale = 1.0 / (nfft as f64 * x.len() as f64);
    let n_bins = nfft / 2 + 1;
    let power = (0..n_bins)
        .map(|k| {
            let p = buf[k].norm_sqr() * scale;
            if k == 0 || (nfft.is_multiple_of(2) && k == nfft / 2) {
                p
            } else {
                2.0 * p
            }
        })
        .collect();
    Ok(Spectrum {
        power,
        delta_f: fs / nfft as f64,
        f0: 0.0,
    })
}

/// Biased autocorrelation of the mean-removed signal normalized by its lag-0
/// value, for lags `0..=max_lag`.
pub fn autocorr_normalized(x: &[f64], max_lag: usize) -> Result<Vec<f64>, DspError> {
    if x.len() < 2 {
        return Err(DspError::TooShort { needed: 2, got: x.len() });
    }
    let m = mean(x);
    let n = x.len();
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
    if var <= (1e-12 * m.abs()).powi(2) {
        return Err(DspError::ZeroVariance);
    }
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v - m, 0.0)).collect();
    buf.resize(size, Complex64::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    buf.iter_mut().for_each(|c| *c = Complex64::new(c.norm_sqr(), 0.0));
    planner.plan_fft_inverse(size).process(&mut buf);
    let r0 = buf[0].re;
    Ok((0..=max_lag.min(n - 1)).map(|k| buf[k].re / r0).collect())
}

/// Magnitude of the analytic signal, computed with the FFT.
pub fn hilbert_envelope(x: &TimeSeries) -> Result<TimeSeries, DspError> {
    let n = x.len();
    if n < 8 {
        return Err(DspError::TooShort { needed: 8, got: n });
    }
    let mut buf: Vec<Complex64> = x.samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let h = if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
            1.0
        } else if k < n.div_ceil(2) {
            2.0
        } else {
            0.0
        };
        *c *= h;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    Ok(TimeSeries {
        samples: buf.iter().map(|c| c.norm() / n as f64).collect(),
        fs: x.fs,
    })
}

/// Mean of `x^2` over a sliding window of `window` samples, hop 1. Output
/// sample `i` covers input `i..i + window`.
pub fn short_term_power(x: &TimeSeries, window: usize) -> Result<TimeSeries, DspError> {
    if window == 0 {
        return Err(DspError::InvalidWindow("window must be at least one sample".into()));
    }
    if window > x.len() {
        return Err(DspError::TooShort { needed: window, got: x.len() });
    }
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in &x.samples {
        acc += v * v;
        prefix.push(acc);
    }
    let samples = (0..=x.len() - window)
        .map(|i| (prefix[i + window] - prefix[i]) / window as f64)
        .collect();
    Ok(TimeSeries { samples, fs: x.fs })
}

/// Principal components of a multichannel recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    /// Per-component score series, strongest component first.
    pub scores: Vec<Vec<f64>>,
    /// Component variances (covariance eigenvalues), descending.
    pub explained_variance: Vec<f64>,
    /// Unit loading vector per component, largest-magnitude entry positive.
    pub loadings: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

impl PcaResult {
    pub fn explained_ratio(&self) -> Vec<f64> {
        let total: f64 = self.explained_variance.iter().sum();
        if total <= 0.0 {
            return vec![0.0; self.explained_variance.len()];
        }
        self.explained_variance.iter().map(|v| v / total).collect()
    }
}

/// Projects centered channels on the eigenvectors of their sample
/// covariance. Zero-variance input yields zero scores.
pub fn pca_scores(channels: &[&[f64]]) -> Result<PcaResult, DspError> {
    let p = channels.len();
    if p < 2 {
        return Err(DspError::InvalidWindow("PCA needs at least two channels".into()));
    }
    let n = channels[0].len();
    if channels.iter().any(|c| c.len() != n) {
        return Err(DspError::RaggedChannels);
    }
    if n < 2 {
        return Err(DspError::TooShort { needed: 2, got: n });
    }
    let means: Vec<f64> = channels.iter().map(|c| mean(c)).collect();
    let centered = DMatrix::from_fn(n, p, |i, j| channels[j][i] - means[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let mut loadings = Vec::with_capacity(p);
    let mut explained = Vec::with_capacity(p);
    for &k in &order {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let lead = v
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        loadings.push(v);
        explained.push(eig.eigenvalues[k].max(0.0));
    }
    let scores = loadings
        .iter()
        .map(|v| {
            (0..n)
                .map(|i| (0..p).map(|j| centered[(i, j)] * v[j]).sum())
                .collect()
        })
        .collect();
    Ok(PcaResult {
        scores,
        explained_variance: explained,
        loadings,
        mean: means,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Taper {
    #[default]
    Rectangular,
    Hann,
}

impl Taper {
    fn weights(self, n: usize) -> Option<Vec<f64>> {
        match self {
            Taper::Rectangular => None,
            Taper::Hann => Some(
                (0..n)
                    .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                    .collect(),
            ),
        }
    }
}

/// Window start offsets (in samples) for a signal of `len` samples.
pub fn stft_starts(len: usize, window: usize, hop: usize) -> Vec<usize> {
    if window == 0 || hop == 0 || window > len {
        return Vec::new();
    }
    (0..=len - window).step_by(hop).collect()
}

/// Periodograms of windows starting at 0, hop, 2·hop, … while the window
/// fits in the signal. Window and hop are in seconds.
pub fn stft(x: &TimeSeries, window_s: f64, hop_s: f64, taper: Taper) -> Result<Vec<Spectrum>, DspError> {
    let window = (window_s * x.fs).round();
    let hop = (hop_s * x.fs).round();
    if !(window >= 1.0) || !(hop >= 1.0) {
        return Err(DspError::InvalidWindow(format!(
            "window {window_s} s and hop {hop_s} s must each span at least one sample"
        )));
    }
    let (window, hop) = (window as usize, hop as usize);
    if window > x.len() {
        return Err(DspError::TooShort { needed: window, got: x.len() });
    }
    let weights = taper.weights(window);
    stft_starts(x.len(), window, hop)
        .into_iter()
        .map(|start| {
            let seg = &x.samples[start..start + window];
            match &weights {
                None => periodogram_slice(seg, x.fs, window),
                Some(w) => {
                    let tapered: Vec<f64> = seg.iter().zip(w).map(|(a, b)| a * b).collect();
                    periodogram_slice(&tapered, x.fs, window)
                }
            }
        })
        .collect()
}
