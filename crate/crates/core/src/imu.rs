//! Nine-axis IMU channel layout, sensor configuration and 16-bit
//! quantization.
//!
//! Physical units: accelerometer in mg, gyroscope in dps, magnetometer in
//! gauss. Channel order is accel xyz, gyro xyz, mag xyz everywhere.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::TimeSeries;

pub const N_CHANNELS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorGroup {
    Accel,
    Gyro,
    Mag,
}

impl SensorGroup {
    pub const ALL: [SensorGroup; 3] = [SensorGroup::Accel, SensorGroup::Gyro, SensorGroup::Mag];

    pub fn unit(self) -> &'static str {
        match self {
            SensorGroup::Accel => "mg",
            SensorGroup::Gyro => "dps",
            SensorGroup::Mag => "G",
        }
    }

    pub fn channels(self) -> [Channel; 3] {
        let base = self as usize * 3;
        [Channel(base), Channel(base + 1), Channel(base + 2)]
    }
}

/// Index into the nine IMU channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Channel(pub usize);

impl Channel {
    pub const ACCEL_X: Channel = Channel(0);
    pub const ACCEL_Y: Channel = Channel(1);
    pub const ACCEL_Z: Channel = Channel(2);

    pub fn all() -> impl Iterator<Item = Channel> {
        (0..N_CHANNELS).map(Channel)
    }

    pub fn group(self) -> SensorGroup {
        SensorGroup::ALL[self.0 / 3]
    }

    pub fn axis(self) -> usize {
        self.0 % 3
    }

    pub fn name(self) -> String {
        let g = match self.group() {
            SensorGroup::Accel => "accel",
            SensorGroup::Gyro => "gyro",
            SensorGroup::Mag => "mag",
        };
        format!("{g}_{}", ["x", "y", "z"][self.axis()])
    }
}

// ---------------------------------------------------------------------------
// Sensor configuration
// ---------------------------------------------------------------------------

/// Counts per mg for an accelerometer full scale in g.
pub fn accel_sensitivity(range_g: u16) -> Option<f64> {
    match range_g {
        2 => Some(15.0),
        4 => Some(7.5),
        8 => Some(3.75),
        16 => Some(1.875),
        _ => None,
    }
}

/// Counts per dps for a gyroscope full scale in dps.
pub fn gyro_sensitivity(range_dps: u16) -> Option<f64> {
    match range_dps {
        250 => Some(120.0),
        500 => Some(60.0),
        1000 => Some(30.0),
        2000 => Some(15.0),
        _ => None,
    }
}

/// Counts per gauss for a magnetometer full scale in gauss.
pub fn mag_sensitivity(range_gauss: u16) -> Option<f64> {
    match range_gauss {
        4 => Some(6842.0),
        8 => Some(3421.0),
        12 => Some(2281.0),
        16 => Some(1711.0),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    /// Sample rate in Hz.
    pub fs: f64,
    pub accel_range_g: u16,
    pub gyro_range_dps: u16,
    pub mag_range_gauss: u16,
    /// Counts per mg.
    pub accel_sensitivity: f64,
    /// Counts per dps.
    pub gyro_sensitivity: f64,
    /// Counts per gauss.
    pub mag_sensitivity: f64,
    /// µg/√Hz.
    pub accel_noise_psd: f64,
    /// dps/√Hz.
    pub gyro_noise_psd: f64,
    /// mG RMS per axis.
    pub mag_rms_noise: [f64; 3],
    /// Bandwidth that converts noise density to RMS, Hz. Defaults to `fs`.
    pub noise_bandwidth: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self::with_ranges(200.0, 2, 1000, 4).expect("default ranges are valid")
    }
}

impl SensorConfig {
    /// Low-noise defaults at the given rate and full-scale ranges.
    pub fn with_ranges(fs: f64, accel_g: u16, gyro_dps: u16, mag_gauss: u16) -> Result<Self, ImuError> {
        let config = Self {
            fs,
            accel_range_g: accel_g,
            gyro_range_dps: gyro_dps,
            mag_range_gauss: mag_gauss,
            accel_sensitivity: accel_sensitivity(accel_g).ok_or(ImuError::UnsupportedRange(accel_g as u32))?,
            gyro_sensitivity: gyro_sensitivity(gyro_dps).ok_or(ImuError::UnsupportedRange(gyro_dps as u32))?,
            mag_sensitivity: mag_sensitivity(mag_gauss).ok_or(ImuError::UnsupportedRange(mag_gauss as u32))?,
            accel_noise_psd: 260.0,
            gyro_noise_psd: 0.025,
            mag_rms_noise: [3.2, 3.2, 4.1],
            noise_bandwidth: fs,
        };
        config.validate()?;
        Ok(config)
    }

    /// A configuration with every noise source switched off.
    pub fn noiseless(mut self) -> Self {
        self.accel_noise_psd = 0.0;
        self.gyro_noise_psd = 0.0;
        self.mag_rms_noise = [0.0; 3];
        self
    }

    pub fn validate(&self) -> Result<(), ImuError> {
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(ImuError::InvalidConfig(format!("sample rate {}", self.fs)));
        }
        if !(self.noise_bandwidth > 0.0) {
            return Err(ImuError::InvalidConfig("noise bandwidth must be positive".into()));
        }
        for group in SensorGroup::ALL {
            let (fs, sens) = (self.full_scale(group), self.sensitivity(group));
            if !(sens > 0.0) || (fs * sens).round() > i16::MAX as f64 {
                return Err(ImuError::InvalidConfig(format!(
                    "{group:?} full scale {fs} x sensitivity {sens} exceeds 16 bits"
                )));
            }
        }
        Ok(())
    }

    /// Full scale in the group's physical unit.
    pub fn full_scale(&self, group: SensorGroup) -> f64 {
        match group {
            SensorGroup::Accel => self.accel_range_g as f64 * 1000.0,
            SensorGroup::Gyro => self.gyro_range_dps as f64,
            SensorGroup::Mag => self.mag_range_gauss as f64,
        }
    }

    pub fn sensitivity(&self, group: SensorGroup) -> f64 {
        match group {
            SensorGroup::Accel => self.accel_sensitivity,
            SensorGroup::Gyro => self.gyro_sensitivity,
            SensorGroup::Mag => self.mag_sensitivity,
        }
    }

    /// Largest count magnitude before clipping.
    pub fn count_limit(&self, group: SensorGroup) -> i16 {
        (self.full_scale(group) * self.sensitivity(group))
            .round()
            .min(i16::MAX as f64) as i16
    }

    /// Standard deviation of the white noise on a channel, in the channel's
    /// unit: density × √bandwidth for accel and gyro, datasheet RMS for mag.
    pub fn noise_sigma(&self, channel: Channel) -> f64 {
        match channel.group() {
            SensorGroup::Accel => self.accel_noise_psd * self.noise_bandwidth.sqrt() / 1000.0,
            SensorGroup::Gyro => self.gyro_noise_psd * self.noise_bandwidth.sqrt(),
            SensorGroup::Mag => self.mag_rms_noise[channel.axis()] / 1000.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Recordings and raw frames
// ---------------------------------------------------------------------------

/// Nine aligned channels in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuRecording {
    pub fs: f64,
    pub channels: Vec<Vec<f64>>,
}

impl ImuRecording {
    pub fn zeros(n: usize, fs: f64) -> Self {
        Self {
            fs,
            channels: vec![vec![0.0; n]; N_CHANNELS],
        }
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, ch: Channel) -> TimeSeries {
        TimeSeries {
            samples: self.channels[ch.0].clone(),
            fs: self.fs,
        }
    }

    pub fn sample(&self, i: usize) -> [f64; N_CHANNELS] {
        std::array::from_fn(|c| self.channels[c][i])
    }

    pub fn push(&mut self, values: &[f64; N_CHANNELS]) {
        for (c, v) in values.iter().enumerate() {
            self.channels[c].push(*v);
        }
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> ImuRecording {
        ImuRecording {
            fs: self.fs,
            channels: self.channels.iter().map(|c| c[range.clone()].to_vec()).collect(),
        }
    }

    /// Appends another recording taken at the same rate.
    pub fn extend(&mut self, other: &ImuRecording) {
        for (a, b) in self.channels.iter_mut().zip(&other.channels) {
            a.extend_from_slice(b);
        }
    }
}

/// One quantized 9-axis sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RawFrame {
    /// Sample index.
    pub t: u32,
    pub counts: [i16; N_CHANNELS],
}

impl RawFrame {
    pub fn accel(&self) -> [i16; 3] {
        [self.counts[0], self.counts[1], self.counts[2]]
    }

    pub fn gyro(&self) -> [i16; 3] {
        [self.counts[3], self.counts[4], self.counts[5]]
    }

    pub fn mag(&self) -> [i16; 3] {
        [self.counts[6], self.counts[7], self.counts[8]]
    }
}

/// Per-channel count of clipped samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaturationStats {
    pub clipped: [u64; N_CHANNELS],
}

impl SaturationStats {
    pub fn total(&self) -> u64 {
        self.clipped.iter().sum()
    }
}

/// Quantizes one sample; returns the counts and a per-channel clip mask.
pub fn quantize_sample(values: &[f64; N_CHANNELS], config: &SensorConfig) -> ([i16; N_CHANNELS], [bool; N_CHANNELS]) {
    let mut counts = [0i16; N_CHANNELS];
    let mut clipped = [false; N_CHANNELS];
    for ch in Channel::all() {
        let group = ch.group();
        let limit = config.count_limit(group) as f64;
        let raw = (values[ch.0] * config.sensitivity(group)).round();
        let c = raw.clamp(-limit, limit);
        clipped[ch.0] = c != raw;
        counts[ch.0] = c as i16;
    }
    (counts, clipped)
}

pub fn dequantize_sample(counts: &[i16; N_CHANNELS], config: &SensorConfig) -> [f64; N_CHANNELS] {
    std::array::from_fn(|c| counts[c] as f64 / config.sensitivity(Channel(c).group()))
}

/// Converts a recording to raw frames numbered from `first_t`.
pub fn quantize(
    recording: &ImuRecording,
    config: &SensorConfig,
    first_t: u32,
) -> (Vec<RawFrame>, SaturationStats) {
    let mut stats = SaturationStats::default();
    let frames = (0..recording.len())
        .map(|i| {
            let (counts, clipped) = quantize_sample(&recording.sample(i), config);
            for (s, c) in stats.clipped.iter_mut().zip(clipped) {
                *s += c as u64;
            }
            RawFrame {
                t: first_t.wrapping_add(i as u32),
                counts,
            }
        })
        .collect();
    (frames, stats)
}

pub fn dequantize(frames: &[RawFrame], config: &SensorConfig) -> ImuRecording {
    let mut rec = ImuRecording {
        fs: config.fs,
        channels: (0..N_CHANNELS).map(|_| Vec::with_capacity(frames.len())).collect(),
    };
    for f in frames {
        rec.push(&dequantize_sample(&f.counts, config));
    }
    rec
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImuError {
    #[error("unsupported full-scale range {0}")]
    UnsupportedRange(u32),
    #[error("invalid sensor configuration: {0}")]
    InvalidConfig(String),
}
