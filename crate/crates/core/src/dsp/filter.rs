//! IIR filter design and streaming application.
//!
//! Filters are designed from the analog Butterworth or Chebyshev type-I
//! prototype, shifted to the requested response with pre-warped band edges,
//! mapped to the z-plane by the bilinear transform and realized as a cascade
//! of second-order sections in transposed direct form II.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::DspError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterFamily {
    Butterworth,
    Chebyshev1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterResponse {
    Lowpass(f64),
    Highpass(f64),
    Bandpass(f64, f64),
}

/// What to design. For Chebyshev filters the cutoff is the passband edge,
/// where the gain is `-ripple_db`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub family: FilterFamily,
    pub order: usize,
    pub response: FilterResponse,
    #[serde(default = "default_ripple")]
    pub ripple_db: f64,
}

fn default_ripple() -> f64 {
    0.5
}

impl FilterSpec {
    pub fn butterworth(order: usize, response: FilterResponse) -> Self {
        Self {
            family: FilterFamily::Butterworth,
            order,
            response,
            ripple_db: 0.0,
        }
    }

    /// Chebyshev type-I with 0.5 dB passband ripple.
    pub fn chebyshev(order: usize, response: FilterResponse) -> Self {
        Self {
            family: FilterFamily::Chebyshev1,
            order,
            response,
            ripple_db: default_ripple(),
        }
    }

    /// The feature band-pass: third-order Butterworth, 0.25–20 Hz.
    pub fn feature_bandpass() -> Self {
        Self::butterworth(3, FilterResponse::Bandpass(0.25, 20.0))
    }

    pub fn validate(&self, fs: f64) -> Result<(), DspError> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(DspError::InvalidSampleRate(fs));
        }
        if self.order == 0 || self.order > 12 {
            return Err(DspError::InvalidFilter(format!("order {} not in 1..=12", self.order)));
        }
        let nyquist = fs / 2.0;
        let check = |f: f64| {
            if f > 0.0 && f < nyquist {
                Ok(())
            } else {
                Err(DspError::CutoffOutOfRange { cutoff: f, nyquist })
            }
        };
        match self.response {
            FilterResponse::Lowpass(f) | FilterResponse::Highpass(f) => check(f)?,
            FilterResponse::Bandpass(lo, hi) => {
                check(lo)?;
                check(hi)?;
                if lo >= hi {
                    return Err(DspError::InvalidFilter(format!(
                        "band-pass edges must satisfy low < high, got {lo} and {hi}"
                    )));
                }
            }
        }
        if self.family == FilterFamily::Chebyshev1 && !(self.ripple_db > 0.0) {
            return Err(DspError::InvalidFilter("Chebyshev ripple must be positive".into()));
        }
        Ok(())
    }
}

/// One second-order section, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, z1: Complex64) -> Complex64 {
        let z2 = z1 * z1;
        let num = self.b[0] + self.b[1] * z1 + self.b[2] * z2;
        let den = 1.0 + self.a[0] * z1 + self.a[1] * z2;
        num / den
    }
}

/// A designed filter: cascade of biquads at a fixed sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosCoefficients {
    pub sections: Vec<Biquad>,
    pub fs: f64,
}

impl SosCoefficients {
    /// Complex frequency response at `freq` Hz.
    pub fn response(&self, freq: f64) -> Complex64 {
        let w = 2.0 * PI * freq / self.fs;
        let z1 = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z1))
    }

    pub fn magnitude_db(&self, freq: f64) -> f64 {
        20.0 * self.response(freq).norm().log10()
    }

    pub fn stream(&self) -> SosFilter {
        SosFilter::new(self.clone())
    }
}

struct Zpk {
    zeros: Vec<Complex64>,
    poles: Vec<Complex64>,
    gain: f64,
}

fn prototype(spec: &FilterSpec) -> Zpk {
    let n = spec.order as i32;
    let angles = (0..n).map(|i| PI * (2 * i - n + 1) as f64 / (2.0 * n as f64));
    match spec.family {
        FilterFamily::Butterworth => Zpk {
            zeros: Vec::new(),
            poles: angles.map(|t| -Complex64::from_polar(1.0, t)).collect(),
            gain: 1.0,
        },
        FilterFamily::Chebyshev1 => {
            let eps = (10f64.powf(0.1 * spec.ripple_db) - 1.0).sqrt();
            let mu = (1.0 / eps).asinh() / n as f64;
            let poles: Vec<Complex64> = angles.map(|t| -(Complex64::new(mu, t)).sinh()).collect();
            let mut gain = poles.iter().fold(Complex64::new(1.0, 0.0), |acc, p| acc * -p).re;
            if n % 2 == 0 {
                gain /= (1.0 + eps * eps).sqrt();
            }
            Zpk {
                zeros: Vec::new(),
                poles,
                gain,
            }
        }
    }
}

fn product(values: &[Complex64], f: impl Fn(Complex64) -> Complex64) -> Complex64 {
    values.iter().fold(Complex64::new(1.0, 0.0), |acc, &v| acc * f(v))
}

fn to_lowpass(proto: Zpk, wo: f64) -> Zpk {
    let degree = (proto.poles.len() - proto.zeros.len()) as i32;
    Zpk {
        zeros: proto.zeros.iter().map(|z| z * wo).collect(),
        poles: proto.poles.iter().map(|p| p * wo).collect(),
        gain: proto.gain * wo.powi(degree),
    }
}

fn to_highpass(proto: Zpk, wo: f64) -> Zpk {
    let degree = proto.poles.len() - proto.zeros.len();
    let mut zeros: Vec<Complex64> = proto.zeros.iter().map(|z| wo / z).collect();
    zeros.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), degree));
    let k = product(&proto.zeros, |z| -z) / product(&proto.poles, |p| -p);
    Zpk {
        zeros,
        poles: proto.poles.iter().map(|p| wo / p).collect(),
        gain: proto.gain * k.re,
    }
}

fn to_bandpass(proto: Zpk, wo: f64, bw: f64) -> Zpk {
    let degree = proto.poles.len() - proto.zeros.len();
    let split = |x: &Complex64| {
        let s = x * (bw / 2.0);
        let r = (s * s - wo * wo).sqrt();
        [s + r, s - r]
    };
    let mut zeros: Vec<Complex64> = proto.zeros.iter().flat_map(split).collect();
    zeros.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), degree));
    Zpk {
        zeros,
        poles: proto.poles.iter().flat_map(split).collect(),
        gain: proto.gain * bw.powi(degree as i32),
    }
}

fn bilinear(analog: Zpk, fs: f64) -> Zpk {
    let fs2 = 2.0 * fs;
    let degree = analog.poles.len() - analog.zeros.len();
    let map = |s: &Complex64| (fs2 + s) / (fs2 - s);
    let mut zeros: Vec<Complex64> = analog.zeros.iter().map(map).collect();
    zeros.extend(std::iter::repeat_n(Complex64::new(-1.0, 0.0), degree));
    let k = product(&analog.zeros, |z| fs2 - z) / product(&analog.poles, |p| fs2 - p);
    Zpk {
        zeros,
        poles: analog.poles.iter().map(map).collect(),
        gain: analog.gain * k.re,
    }
}

/// Groups roots into real quadratic factors `1 + c1 z^-1 + c2 z^-2`.
/// Complex roots are paired with their conjugates, real roots with each
/// other; an odd real root leaves a first-order factor.
fn quadratic_factors(roots: &[Complex64]) -> Vec<[f64; 2]> {
    const TOL: f64 = 1e-10;
    let mut factors = Vec::new();
    let mut reals = Vec::new();
    for r in roots {
        if r.im.abs() <= TOL * r.norm().max(1.0) {
            reals.push(r.re);
        } else if r.im > 0.0 {
            factors.push([-2.0 * r.re, r.norm_sqr()]);
        }
    }
    reals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for pair in reals.chunks(2) {
        match pair {
            [a, b] => factors.push([-(a + b), a * b]),
            [a] => factors.push([-a, 0.0]),
            _ => unreachable!(),
        }
    }
    factors
}

fn to_sos(digital: Zpk, fs: f64) -> SosCoefficients {
    let pole_factors = quadratic_factors(&digital.poles);
    let mut zero_factors = quadratic_factors(&digital.zeros);
    let n_sections = pole_factors.len().max(zero_factors.len());
    zero_factors.resize(n_sections, [0.0, 0.0]);
    let mut sections: Vec<Biquad> = pole_factors
        .iter()
        .chain(std::iter::repeat(&[0.0, 0.0]))
        .zip(zero_factors.iter())
        .take(n_sections)
        .map(|(a, z)| Biquad {
            b: [1.0, z[0], z[1]],
            a: *a,
        })
        .collect();
    for b in sections[0].b.iter_mut() {
        *b *= digital.gain;
    }
    SosCoefficients { sections, fs }
}

/// Designs the digital filter described by `spec` at sample rate `fs`.
pub fn design_filter(spec: &FilterSpec, fs: f64) -> Result<SosCoefficients, DspError> {
    spec.validate(fs)?;
    let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
    let proto = prototype(spec);
    let analog = match spec.response {
        FilterResponse::Lowpass(f) => to_lowpass(proto, warp(f)),
        FilterResponse::Highpass(f) => to_highpass(proto, warp(f)),
        FilterResponse::Bandpass(lo, hi) => {
            let (w1, w2) = (warp(lo), warp(hi));
            to_bandpass(proto, (w1 * w2).sqrt(), w2 - w1)
        }
    };
    Ok(to_sos(bilinear(analog, fs), fs))
}

/// Streaming state for a biquad cascade. Output depends only on the input
/// sequence, never on how it is chunked.
#[derive(Debug, Clone)]
pub struct SosFilter {
    coeffs: SosCoefficients,
    state: Vec<[f64; 2]>,
}

impl SosFilter {
    pub fn new(coeffs: SosCoefficients) -> Self {
        let state = vec![[0.0; 2]; coeffs.sections.len()];
        Self { coeffs, state }
    }

    pub fn coefficients(&self) -> &SosCoefficients {
        &self.coeffs
    }

    #[inline]
    pub fn process_sample(&mut self, x: f64) -> f64 {
        let mut v = x;
        for (s, st) in self.coeffs.sections.iter().zip(self.state.iter_mut()) {
            let y = s.b[0] * v + st[0];
            st[0] = s.b[1] * v - s.a[0] * y + st[1];
            st[1] = s.b[2] * v - s.a[1] * y;
            v = y;
        }
        v
    }

    /// Filters a chunk, continuing from the state left by earlier chunks.
    pub fn process(&mut self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.process_sample(v)).collect()
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|s| *s = [0.0; 2]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_cutoffs_at_or_above_nyquist() {
        let spec = FilterSpec::butterworth(2, FilterResponse::Lowpass(100.0));
        assert!(matches!(design_filter(&spec, 200.0), Err(DspError::CutoffOutOfRange { .. })));
        let spec = FilterSpec::butterworth(2, FilterResponse::Bandpass(20.0, 5.0));
        assert!(matches!(design_filter(&spec, 200.0), Err(DspError::InvalidFilter(_))));
        let spec = FilterSpec::butterworth(2, FilterResponse::Highpass(0.0));
        assert!(design_filter(&spec, 200.0).is_err());
    }

    #[test]
    fn section_counts() {
        let bp = design_filter(&FilterSpec::feature_bandpass(), 200.0).unwrap();
        assert_eq!(bp.sections.len(), 3);
        let lp = design_filter(&FilterSpec::butterworth(3, FilterResponse::Lowpass(10.0)), 200.0).unwrap();
        assert_eq!(lp.sections.len(), 2);
        let ch = design_filter(&FilterSpec::chebyshev(2, FilterResponse::Highpass(1.0)), 200.0).unwrap();
        assert_eq!(ch.sections.len(), 1);
    }

    #[test]
    fn feature_bandpass_passband_and_edges() {
        let bp = design_filter(&FilterSpec::feature_bandpass(), 200.0).unwrap();
        let g5 = bp.response(5.0).norm();
        assert!((0.99..=1.0 + 1e-9).contains(&g5), "{g5}");
        assert!((bp.magnitude_db(0.25) + 3.0103).abs() < 0.01);
        assert!((bp.magnitude_db(20.0) + 3.0103).abs() < 0.01);
        // third order: 40 Hz is one octave above the upper edge
        assert!(bp.magnitude_db(40.0) < -15.0);
    }

    #[test]
    fn chebyshev_edge_equals_ripple() {
        for order in [2, 3] {
            let lp = design_filter(&FilterSpec::chebyshev(order, FilterResponse::Lowpass(10.0)), 200.0).unwrap();
            assert!((lp.magnitude_db(10.0) + 0.5).abs() < 1e-6, "order {order}");
            let bp = design_filter(&FilterSpec::chebyshev(order, FilterResponse::Bandpass(2.0, 12.0)), 200.0).unwrap();
            assert!((bp.magnitude_db(2.0) + 0.5).abs() < 1e-6);
            assert!((bp.magnitude_db(12.0) + 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn dc_through_highpass_and_bandpass_settles_to_zero() {
        for spec in [
            FilterSpec::butterworth(2, FilterResponse::Highpass(1.0)),
            FilterSpec::chebyshev(2, FilterResponse::Highpass(1.0)),
            FilterSpec::feature_bandpass(),
            FilterSpec::chebyshev(2, FilterResponse::Bandpass(1.0, 20.0)),
        ] {
            let mut f = design_filter(&spec, 200.0).unwrap().stream();
            let y = f.process(&vec![1000.0; 20_000]);
            assert!(y.last().unwrap().abs() < 1e-6, "{spec:?}: {}", y.last().unwrap());
        }
    }

    #[test]
    fn chunked_matches_batch_bit_for_bit() {
        let x: Vec<f64> = (0..2000).map(|i| ((i * 7919) % 1009) as f64 - 500.0).collect();
        let coeffs = design_filter(&FilterSpec::feature_bandpass(), 200.0).unwrap();
        let batch = coeffs.stream().process(&x);
        let mut f = coeffs.stream();
        let mut chunked = Vec::new();
        let mut pos = 0;
        for len in [1usize, 7, 64, 3, 500, 1].iter().cycle() {
            if pos >= x.len() {
                break;
            }
            let end = (pos + len).min(x.len());
            chunked.extend(f.process(&x[pos..end]));
            pos = end;
        }
        assert_eq!(batch, chunked);
    }
}
