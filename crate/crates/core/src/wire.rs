//! Telemetry frame codec, resynchronizing stream decoder, sequence gap
//! detection, the register configuration file format and link-budget
//! accounting.
//!
//! Frame layout (big-endian, 29 bytes):
//!
//! ```text
//! offset  size  field
//!      0     2  sync   0xA5 0x5A
//!      2     2  seq    wrapping u16
//!      4     4  t      sample index u32
//!      8    18  counts 9 x i16 (accel xyz, gyro xyz, mag xyz)
//!     26     1  flags  bit0 saturation, bit1 marker
//!     27     2  crc    CRC-16/CCITT-FALSE over bytes 2..27
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imu::{RawFrame, N_CHANNELS};

pub const SYNC: [u8; 2] = [0xA5, 0x5A];
pub const FRAME_LEN: usize = 29;
pub const FLAG_SATURATED: u8 = 0b01;
pub const FLAG_MARKER: u8 = 0b10;

/// Radio link capacity, bits per second.
pub const LINK_BUDGET_BPS: f64 = 560_000.0;
/// Maximum IMU output data rate, bits per second.
pub const IMU_CEILING_BPS: f64 = 144_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Frame {
    pub seq: u16,
    pub t: u32,
    pub counts: [i16; N_CHANNELS],
    pub flags: u8,
}

impl Frame {
    pub fn from_raw(seq: u16, raw: &RawFrame, flags: u8) -> Self {
        Self {
            seq,
            t: raw.t,
            counts: raw.counts,
            flags,
        }
    }

    pub fn raw(&self) -> RawFrame {
        RawFrame {
            t: self.t,
            counts: self.counts,
        }
    }

    pub fn saturated(&self) -> bool {
        self.flags & FLAG_SATURATED != 0
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum FrameError {
    #[error("bad sync bytes {0:#04x} {1:#04x}")]
    BadSync(u8, u8),
    #[error("CRC mismatch: computed {computed:#06x}, received {received:#06x}")]
    BadCrc { computed: u16, received: u16 },
    #[error("truncated frame: {0} of 29 bytes")]
    Truncated(usize),
}

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xorout.
pub fn crc16_ccitt(data: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &b in data {
        crc ^= (b as u16) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ 0x1021
            } else {
                crc << 1
            };
        }
    }
    crc
}

pub fn encode_frame(f: &Frame) -> [u8; FRAME_LEN] {
    let mut out = [0u8; FRAME_LEN];
    out[0..2].copy_from_slice(&SYNC);
    out[2..4].copy_from_slice(&f.seq.to_be_bytes());
    out[4..8].copy_from_slice(&f.t.to_be_bytes());
    for (i, c) in f.counts.iter().enumerate() {
        out[8 + 2 * i..10 + 2 * i].copy_from_slice(&c.to_be_bytes());
    }
    out[26] = f.flags;
    let crc = crc16_ccitt(&out[2..27]);
    out[27..29].copy_from_slice(&crc.to_be_bytes());
    out
}

/// Decodes one frame starting at `bytes[0]`; trailing bytes are ignored.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, FrameError> {
    if bytes.len() >= 2 && bytes[0..2] != SYNC {
        return Err(FrameError::BadSync(bytes[0], bytes[1]));
    }
    if bytes.len() < FRAME_LEN {
        if bytes.len() == 1 && bytes[0] != SYNC[0] {
            return Err(FrameError::BadSync(bytes[0], 0));
        }
        return Err(FrameError::Truncated(bytes.len()));
    }
    let computed = crc16_ccitt(&bytes[2..27]);
    let received = u16::from_be_bytes([bytes[27], bytes[28]]);
    if computed != received {
        return Err(FrameError::BadCrc { computed, received });
    }
    Ok(Frame {
        seq: u16::from_be_bytes([bytes[2], bytes[3]]),
        t: u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]),
        counts: std::array::from_fn(|i| i16::from_be_bytes([bytes[8 + 2 * i], bytes[9 + 2 * i]])),
        flags: bytes[26],
    })
}

/// Counters kept by [`StreamDecoder`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderStats {
    pub frames: u64,
    pub bad_crc: u64,
    /// Bytes skipped while hunting for sync.
    pub skipped_bytes: u64,
}

/// Byte-stream decoder that resynchronizes on the sync word after
/// corruption. Owns its scan buffer; feed arbitrary chunks.
#[derive(Debug, Default)]
pub struct StreamDecoder {
    buf: Vec<u8>,
    stats: DecoderStats,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stats(&self) -> DecoderStats {
        self.stats
    }

    /// Bytes held waiting for the rest of a frame.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    pub fn push(&mut self, chunk: &[u8]) -> Vec<Frame> {
        self.buf.extend_from_slice(chunk);
        let mut frames = Vec::new();
        let mut pos = 0;
        while pos < self.buf.len() {
            let rest = &self.buf[pos..];
            if rest[0] != SYNC[0] || (rest.len() >= 2 && rest[1] != SYNC[1]) {
                pos += 1;
                self.stats.skipped_bytes += 1;
                continue;
            }
            match decode_frame(rest) {
                Ok(f) => {
                    frames.push(f);
                    self.stats.frames += 1;
                    pos += FRAME_LEN;
                }
                Err(FrameError::Truncated(_)) => break,
                Err(FrameError::BadCrc { .. }) => {
                    // the sync word may have been payload; rescan one byte on
                    self.stats.bad_crc += 1;
                    self.stats.skipped_bytes += 1;
                    pos += 1;
                }
                Err(FrameError::BadSync(..)) => unreachable!("sync checked above"),
            }
        }
        self.buf.drain(..pos);
        frames
    }
}

// ---------------------------------------------------------------------------
// Sequence gaps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    /// Position in the input where the discontinuity was observed.
    pub index: usize,
    /// First missing sequence number.
    pub first_missing: u16,
    pub missing: u16,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapReport {
    pub gaps: Vec<Gap>,
}

impl GapReport {
    pub fn count(&self) -> usize {
        self.gaps.len()
    }

    pub fn missing_total(&self) -> u64 {
        self.gaps.iter().map(|g| g.missing as u64).sum()
    }
}

/// Incremental gap tracker for a live stream.
#[derive(Debug, Clone, Default)]
pub struct GapTracker {
    last: Option<u16>,
    seen: usize,
}

impl GapTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feeds the next sequence number; returns a gap if one precedes it.
    /// A repeated or backwards number counts as a gap of `seq - expected`
    /// modulo 2^16.
    pub fn observe(&mut self, seq: u16) -> Option<Gap> {
        let index = self.seen;
        self.seen += 1;
        let gap = self.last.and_then(|last| {
            let expected = last.wrapping_add(1);
            let missing = seq.wrapping_sub(expected);
            (missing != 0).then_some(Gap {
                index,
                first_missing: expected,
                missing,
            })
        });
        self.last = Some(seq);
        gap
    }
}

pub fn detect_gaps(seqs: impl IntoIterator<Item = u16>) -> GapReport {
    let mut tracker = GapTracker::new();
    GapReport {
        gaps: seqs.into_iter().filter_map(|s| tracker.observe(s)).collect(),
    }
}

// ---------------------------------------------------------------------------
// Register configuration file
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigCommand {
    pub writes: Vec<(u8, u8)>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: malformed entry {text:?}")]
    Malformed { line: usize, text: String },
    #[error("line {line}: duplicate register address {addr:#04x}")]
    DuplicateAddress { line: usize, addr: u8 },
    #[error("configuration file has no register entries")]
    Empty,
}

fn parse_hex_byte(s: &str) -> Option<u8> {
    let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    if digits.is_empty() || digits.len() > 2 {
        return None;
    }
    u8::from_str_radix(digits, 16).ok()
}

/// Parses `ADDR=VALUE` hex lines. `#` starts a comment; blank lines are
/// ignored.
pub fn parse_config_file(text: &str) -> Result<ConfigCommand, ConfigError> {
    let mut writes = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let malformed = || ConfigError::Malformed {
            line,
            text: body.to_string(),
        };
        let (a, v) = body.split_once('=').ok_or_else(malformed)?;
        let addr = parse_hex_byte(a.trim()).ok_or_else(malformed)?;
        let value = parse_hex_byte(v.trim()).ok_or_else(malformed)?;
        if !seen.insert(addr) {
            return Err(ConfigError::DuplicateAddress { line, addr });
        }
        writes.push((addr, value));
    }
    if writes.is_empty() {
        return Err(ConfigError::Empty);
    }
    Ok(ConfigCommand { writes })
}

pub fn format_config_file(cmd: &ConfigCommand) -> String {
    let mut s = String::new();
    for (a, v) in &cmd.writes {
        let _ = writeln!(s, "{a:#04x}={v:#04x}");
    }
    s
}

// ---------------------------------------------------------------------------
// Link budget
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub sample_rate_hz: f64,
    pub frame_bps: f64,
    /// Sensor payload only (9 × 16 bit per sample).
    pub payload_bps: f64,
    pub link_bps: f64,
    pub imu_ceiling_bps: f64,
    pub link_utilization: f64,
}

impl LinkBudget {
    pub fn at(sample_rate_hz: f64) -> Self {
        let frame_bps = FRAME_LEN as f64 * 8.0 * sample_rate_hz;
        Self {
            sample_rate_hz,
            frame_bps,
            payload_bps: (N_CHANNELS * 16) as f64 * sample_rate_hz,
            link_bps: LINK_BUDGET_BPS,
            imu_ceiling_bps: IMU_CEILING_BPS,
            link_utilization: frame_bps / LINK_BUDGET_BPS,
        }
    }

    pub fn fits_link(&self) -> bool {
        self.frame_bps <= self.link_bps
    }

    pub fn fits_imu_ceiling(&self) -> bool {
        self.payload_bps <= self.imu_ceiling_bps
    }

    /// Bytes of raw frames for a recording of the given length.
    pub fn storage_bytes(&self, seconds: f64) -> f64 {
        self.frame_bps / 8.0 * seconds
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(seq: u16) -> Frame {
        Frame {
            seq,
            t: 70_000 + seq as u32,
            counts: [1, -2, 15000, 300, -300, 0, 6842, -6842, i16::MIN],
            flags: FLAG_MARKER,
        }
    }

    #[test]
    fn crc_check_value() {
        assert_eq!(crc16_ccitt(b"123456789"), 0x29B1);
    }

    #[test]
    fn zero_frame_round_trip() {
        let f = Frame {
            seq: 0,
            t: 0,
            counts: [0; 9],
            flags: 0,
        };
        let bytes = encode_frame(&f);
        assert_eq!(&bytes[..2], &SYNC);
        assert!(bytes[2..27].iter().all(|b| *b == 0));
        assert_eq!(decode_frame(&bytes).unwrap(), f);
    }

    #[test]
    fn error_kinds() {
        let mut b = encode_frame(&frame(3));
        assert_eq!(decode_frame(&b[..10]), Err(FrameError::Truncated(10)));
        b[12] ^= 0x10;
        assert!(matches!(decode_frame(&b), Err(FrameError::BadCrc { .. })));
        b[0] = 0;
        assert!(matches!(decode_frame(&b), Err(FrameError::BadSync(0, 0x5A))));
    }

    #[test]
    fn decoder_resyncs_after_garbage() {
        let mut stream = Vec::new();
        stream.extend_from_slice(&[0xA5, 0x00, 0x13, 0xA5]);
        stream.extend_from_slice(&encode_frame(&frame(1)));
        let mut broken = encode_frame(&frame(2));
        broken[20] ^= 0xFF;
        stream.extend_from_slice(&broken);
        stream.extend_from_slice(&encode_frame(&frame(3)));
        let mut dec = StreamDecoder::new();
        let mut got = Vec::new();
        for chunk in stream.chunks(7) {
            got.extend(dec.push(chunk));
        }
        assert_eq!(got, vec![frame(1), frame(3)]);
        assert_eq!(dec.stats().bad_crc, 1);
        assert_eq!(dec.pending(), 0);
    }

    #[test]
    fn gaps() {
        assert_eq!(detect_gaps(0..1000).count(), 0);
        let r = detect_gaps((0..=10).chain(12..=20));
        assert_eq!(
            r.gaps,
            vec![Gap {
                index: 11,
                first_missing: 11,
                missing: 1
            }]
        );
        assert_eq!(detect_gaps([65534, 65535, 0, 1]).count(), 0);
    }

    #[test]
    fn config_file() {
        assert_eq!(parse_config_file("0x10=0x03").unwrap().writes, vec![(0x10, 0x03)]);
        let text = "# ranges\n0x10=0x03\n\n0x20 = 0xff # odr\n";
        assert_eq!(parse_config_file(text).unwrap().writes, vec![(0x10, 0x03), (0x20, 0xFF)]);
        let dup = parse_config_file("0x10=0x03\n0x10=0x04").unwrap_err();
        assert_eq!(dup, ConfigError::DuplicateAddress { line: 2, addr: 0x10 });
        assert!(dup.to_string().contains("0x10"));
        assert!(matches!(parse_config_file("0x1g=0x00"), Err(ConfigError::Malformed { .. })));
        assert!(matches!(parse_config_file("0x100=0x00"), Err(ConfigError::Malformed { .. })));
        assert_eq!(parse_config_file("# nothing\n\n"), Err(ConfigError::Empty));
    }

    #[test]
    fn link_budget_at_200_sps() {
        let b = LinkBudget::at(200.0);
        assert_eq!(b.frame_bps, 46_400.0);
        assert_eq!(b.payload_bps, 28_800.0);
        assert!(b.fits_link() && b.fits_imu_ceiling());
        assert!(LinkBudget::at(1000.0).fits_imu_ceiling());
    }
}
