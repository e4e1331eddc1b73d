//! Append-only session log.
//!
//! File layout: the 8-byte magic `TRMLOG01`, then records of
//! `u32 body length | body | u32 CRC-32 of body`, little-endian. A body is
//! `u64 sequence number | u8 kind | payload`. Frame batches carry a `u16`
//! count followed by wire-encoded frames; every other kind is one line of
//! JSON.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use tremor_core::imu::SensorConfig;
use tremor_core::session::{AnnotationEvent, SessionMeta};
use tremor_core::wire::{decode_frame, encode_frame, Frame, Gap, FRAME_LEN};

use crate::command::{Ack, Command};
use crate::latency::LatencyStats;
use crate::view::ViewTransform;

pub const LOG_MAGIC: &[u8; 8] = b"TRMLOG01";
pub const LOG_FORMAT_VERSION: u32 = 1;
/// Frames per batch record.
pub const FRAME_BATCH: usize = 20;
const MAX_BODY: u32 = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format_version: u32,
    pub meta: SessionMeta,
    pub sensor: SensorConfig,
    pub view: ViewTransform,
    pub axis_mask: [bool; 9],
    pub chunk: usize,
    #[serde(default)]
    pub started_wall_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub sample: u64,
    pub wall_ms: Option<u64>,
    pub command: Command,
    pub ack: Ack,
}

/// Snapshot of an event after a command changed it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub sample: u64,
    pub text: String,
    pub event: AnnotationEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRecord {
    /// First sample processed with the new view.
    pub sample: u64,
    pub view: ViewTransform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub sample: u64,
    pub gap: Gap,
}

/// Source decode trouble (bad CRC, skipped bytes, read errors).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub sample: u64,
    pub bad_crc: u64,
    pub skipped_bytes: u64,
    #[serde(default)]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndRecord {
    pub frames: u64,
    pub next_sample: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogRecord {
    Header(LogHeader),
    Frames(Vec<Frame>),
    Command(CommandRecord),
    Event(EventRecord),
    Config(ConfigRecord),
    Gap(GapRecord),
    Stream(StreamRecord),
    Perf(LatencyStats),
    End(EndRecord),
}

impl LogRecord {
    pub fn kind(&self) -> u8 {
        match self {
            LogRecord::Header(_) => 1,
            LogRecord::Frames(_) => 2,
            LogRecord::Command(_) => 3,
            LogRecord::Event(_) => 4,
            LogRecord::Config(_) => 5,
            LogRecord::Gap(_) => 6,
            LogRecord::Stream(_) => 7,
            LogRecord::Perf(_) => 8,
            LogRecord::End(_) => 9,
        }
    }

    fn payload(&self) -> Vec<u8> {
        fn json<T: Serialize>(v: &T) -> Vec<u8> {
            serde_json::to_vec(v).expect("log records serialize")
        }
        match self {
            LogRecord::Frames(frames) => {
                assert!(frames.len() <= u16::MAX as usize);
                let mut out = Vec::with_capacity(2 + frames.len() * FRAME_LEN);
                out.extend_from_slice(&(frames.len() as u16).to_le_bytes());
                for f in frames {
                    out.extend_from_slice(&encode_frame(f));
                }
                out
            }
            LogRecord::Header(v) => json(v),
            LogRecord::Command(v) => json(v),
            LogRecord::Event(v) => json(v),
            LogRecord::Config(v) => json(v),
            LogRecord::Gap(v) => json(v),
            LogRecord::Stream(v) => json(v),
            LogRecord::Perf(v) => json(v),
            LogRecord::End(v) => json(v),
        }
    }

    fn parse(kind: u8, payload: &[u8]) -> Result<Self, String> {
        fn json<T: for<'a> Deserialize<'a>>(p: &[u8]) -> Result<T, String> {
            serde_json::from_slice(p).map_err(|e| e.to_string())
        }
        Ok(match kind {
            1 => LogRecord::Header(json(payload)?),
            2 => {
                if payload.len() < 2 {
                    return Err("frame batch without count".into());
                }
                let n = u16::from_le_bytes([payload[0], payload[1]]) as usize;
                if payload.len() != 2 + n * FRAME_LEN {
                    return Err(format!("frame batch of {n} has {} bytes", payload.len()));
                }
                let frames = payload[2..]
                    .chunks_exact(FRAME_LEN)
                    .map(|c| decode_frame(c).map_err(|e| e.to_string()))
                    .collect::<Result<_, _>>()?;
                LogRecord::Frames(frames)
            }
            3 => LogRecord::Command(json(payload)?),
            4 => LogRecord::Event(json(payload)?),
            5 => LogRecord::Config(json(payload)?),
            6 => LogRecord::Gap(json(payload)?),
            7 => LogRecord::Stream(json(payload)?),
            8 => LogRecord::Perf(json(payload)?),
            9 => LogRecord::End(json(payload)?),
            k => return Err(format!("unknown record kind {k}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub seq: u64,
    pub record: LogRecord,
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("not a session log (bad magic)")]
    BadMagic,
    #[error("truncated record at byte {offset}; {}", good(last_good_seq))]
    Truncated { offset: u64, last_good_seq: Option<u64> },
    #[error("corrupt record at byte {offset} ({reason}); {}", good(last_good_seq))]
    Corrupt {
        offset: u64,
        reason: String,
        last_good_seq: Option<u64>,
    },
    #[error("log write failed: {0}")]
    Write(String),
    #[error("replay diverged at sequence number {seq}: {reason}")]
    Divergence { seq: u64, reason: String },
    #[error("log has no header record")]
    MissingHeader,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn good(seq: &Option<u64>) -> String {
    match seq {
        Some(s) => format!("last good sequence number {s}"),
        None => "no complete record".into(),
    }
}

impl LogError {
    pub fn last_good_seq(&self) -> Option<u64> {
        match self {
            LogError::Truncated { last_good_seq, .. } | LogError::Corrupt { last_good_seq, .. } => *last_good_seq,
            _ => None,
        }
    }
}

/// Destination for log records. Sequence numbers are assigned in append order.
pub trait LogSink: Send {
    fn append(&mut self, record: LogRecord) -> Result<u64, LogError>;
    fn flush(&mut self) -> Result<(), LogError>;
}

pub struct LogWriter<W: Write> {
    out: W,
    next_seq: u64,
    bytes: u64,
}

impl<W: Write> LogWriter<W> {
    pub fn new(mut out: W) -> Result<Self, LogError> {
        out.write_all(LOG_MAGIC).map_err(|e| LogError::Write(e.to_string()))?;
        Ok(Self {
            out,
            next_seq: 0,
            bytes: LOG_MAGIC.len() as u64,
        })
    }

    pub fn bytes_written(&self) -> u64 {
        self.bytes
    }

    pub fn into_inner(mut self) -> Result<W, LogError> {
        self.out.flush().map_err(|e| LogError::Write(e.to_string()))?;
        Ok(self.out)
    }
}

impl LogWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self, LogError> {
        let f = File::create(path).map_err(|e| LogError::Write(format!("{}: {e}", path.display())))?;
        Self::new(BufWriter::new(f))
    }
}

impl<W: Write + Send> LogSink for LogWriter<W> {
    fn append(&mut self, record: LogRecord) -> Result<u64, LogError> {
        let seq = self.next_seq;
        let mut body = Vec::with_capacity(64);
        body.extend_from_slice(&seq.to_le_bytes());
        body.push(record.kind());
        body.extend(record.payload());
        let crc = crc32fast::hash(&body);
        let mut buf = Vec::with_capacity(body.len() + 8);
        buf.extend_from_slice(&(body.len() as u32).to_le_bytes());
        buf.extend_from_slice(&body);
        buf.extend_from_slice(&crc.to_le_bytes());
        self.out.write_all(&buf).map_err(|e| LogError::Write(e.to_string()))?;
        self.next_seq += 1;
        self.bytes += buf.len() as u64;
        Ok(seq)
    }

    fn flush(&mut self) -> Result<(), LogError> {
        self.out.flush().map_err(|e| LogError::Write(e.to_string()))
    }
}

/// In-memory log, handy for tests and replay checks.
#[derive(Debug, Clone, Default)]
pub struct SharedBuffer(pub Arc<Mutex<Vec<u8>>>);

impl SharedBuffer {
    pub fn bytes(&self) -> Vec<u8> {
        self.0.lock().unwrap().clone()
    }
}

impl Write for SharedBuffer {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

enum LoggerOp {
    Record(Box<LogRecord>),
    Flush(crossbeam_channel::Sender<Result<(), String>>),
}

/// Log sink served by a dedicated logger thread. The channel is unbounded so
/// no record is ever dropped; the first write failure is latched and
/// reported by every later call.
pub struct ThreadedLog {
    tx: Option<crossbeam_channel::Sender<LoggerOp>>,
    failure: Arc<Mutex<Option<String>>>,
    next_seq: u64,
    join: Option<JoinHandle<()>>,
}

impl ThreadedLog {
    pub fn spawn<S: LogSink + 'static>(mut sink: S) -> Self {
        let (tx, rx) = crossbeam_channel::unbounded::<LoggerOp>();
        let failure = Arc::new(Mutex::new(None));
        let fail = failure.clone();
        let join = std::thread::Builder::new()
            .name("logger".into())
            .spawn(move || {
                for op in rx {
                    let failed = fail.lock().unwrap().is_some();
                    match op {
                        LoggerOp::Record(r) if !failed => {
                            if let Err(e) = sink.append(*r) {
                                *fail.lock().unwrap() = Some(e.to_string());
                            }
                        }
                        LoggerOp::Record(_) => {}
                        LoggerOp::Flush(reply) => {
                            let res = match fail.lock().unwrap().clone() {
                                Some(e) => Err(e),
                                None => sink.flush().map_err(|e| e.to_string()),
                            };
                            if let Err(e) = &res {
                                fail.lock().unwrap().get_or_insert(e.clone());
                            }
                            let _ = reply.send(res);
                        }
                    }
                }
            })
            .expect("spawn logger thread");
        Self {
            tx: Some(tx),
            failure,
            next_seq: 0,
            join: Some(join),
        }
    }

    fn check(&self) -> Result<(), LogError> {
        match self.failure.lock().unwrap().clone() {
            Some(e) => Err(LogError::Write(e)),
            None => Ok(()),
        }
    }
}

impl LogSink for ThreadedLog {
    fn append(&mut self, record: LogRecord) -> Result<u64, LogError> {
        self.check()?;
        let tx = self.tx.as_ref().ok_or_else(|| LogError::Write("logger closed".into()))?;
        tx.send(LoggerOp::Record(Box::new(record)))
            .map_err(|_| LogError::Write("logger thread exited".into()))?;
        let seq = self.next_seq;
        self.next_seq += 1;
        Ok(seq)
    }

    fn flush(&mut self) -> Result<(), LogError> {
        let tx = self.tx.as_ref().ok_or_else(|| LogError::Write("logger closed".into()))?;
        let (rtx, rrx) = crossbeam_channel::bounded(1);
        tx.send(LoggerOp::Flush(rtx))
            .map_err(|_| LogError::Write("logger thread exited".into()))?;
        rrx.recv()
            .map_err(|_| LogError::Write("logger thread exited".into()))?
            .map_err(LogError::Write)
    }
}

impl Drop for ThreadedLog {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(j) = self.join.take() {
            let _ = j.join();
        }
    }
}

/// Sequential record reader; stops at the first bad record.
pub struct LogReader<R: Read> {
    input: R,
    offset: u64,
    last_good: Option<u64>,
    done: bool,
}

impl<R: Read> LogReader<R> {
    pub fn new(mut input: R) -> Result<Self, LogError> {
        let mut magic = [0u8; 8];
        match input.read_exact(&mut magic) {
            Ok(()) if &magic == LOG_MAGIC => {}
            Ok(()) => return Err(LogError::BadMagic),
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Err(LogError::BadMagic),
            Err(e) => return Err(e.into()),
        }
        Ok(Self {
            input,
            offset: 8,
            last_good: None,
            done: false,
        })
    }

    /// Reads up to `buf.len()` bytes; returns how many were available.
    fn fill(&mut self, buf: &mut [u8]) -> Result<usize, LogError> {
        let mut got = 0;
        while got < buf.len() {
            match self.input.read(&mut buf[got..]) {
                Ok(0) => break,
                Ok(n) => got += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(got)
    }

    fn read_entry(&mut self) -> Result<Option<LogEntry>, LogError> {
        let start = self.offset;
        let truncated = |s: &Self| LogError::Truncated {
            offset: start,
            last_good_seq: s.last_good,
        };
        let corrupt = |s: &Self, reason: String| LogError::Corrupt {
            offset: start,
            reason,
            last_good_seq: s.last_good,
        };
        let mut len = [0u8; 4];
        match self.fill(&mut len)? {
            0 => return Ok(None),
            4 => {}
            _ => return Err(truncated(self)),
        }
        let n = u32::from_le_bytes(len);
        if !(9..=MAX_BODY).contains(&n) {
            return Err(corrupt(self, format!("body length {n}")));
        }
        let mut body = vec![0u8; n as usize + 4];
        if self.fill(&mut body)? != body.len() {
            return Err(truncated(self));
        }
        let (body, crc) = body.split_at(n as usize);
        let crc = u32::from_le_bytes([crc[0], crc[1], crc[2], crc[3]]);
        if crc32fast::hash(body) != crc {
            return Err(corrupt(self, "CRC mismatch".into()));
        }
        let seq = u64::from_le_bytes(body[..8].try_into().unwrap());
        let expected = self.last_good.map_or(0, |s| s + 1);
        if seq != expected {
            return Err(corrupt(self, format!("sequence number {seq}, expected {expected}")));
        }
        let record = LogRecord::parse(body[8], &body[9..]).map_err(|r| corrupt(self, r))?;
        self.offset += 8 + n as u64;
        self.last_good = Some(seq);
        Ok(Some(LogEntry { seq, record }))
    }

    pub fn last_good_seq(&self) -> Option<u64> {
        self.last_good
    }
}

impl<R: Read> Iterator for LogReader<R> {
    type Item = Result<LogEntry, LogError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let r = self.read_entry();
        if !matches!(r, Ok(Some(_))) {
            self.done = true;
        }
        r.transpose()
    }
}

pub fn read_log_bytes(bytes: &[u8]) -> Result<Vec<LogEntry>, LogError> {
    LogReader::new(bytes)?.collect()
}

pub fn read_log_file(path: &Path) -> Result<Vec<LogEntry>, LogError> {
    let f = File::open(path)?;
    LogReader::new(BufReader::new(f))?.collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tremor_core::session::MotorTaskKind;

    fn frames(n: u16) -> Vec<Frame> {
        (0..n)
            .map(|i| Frame {
                seq: i,
                t: i as u32,
                counts: [i as i16; 9],
                flags: 0,
            })
            .collect()
    }

    fn sample_log() -> Vec<u8> {
        let buf = SharedBuffer::default();
        let mut w = LogWriter::new(buf.clone()).unwrap();
        w.append(LogRecord::Frames(frames(20))).unwrap();
        let mut e = AnnotationEvent::new(1, MotorTaskKind::Rest);
        e.sample_start = Some(0);
        w.append(LogRecord::Event(EventRecord {
            sample: 0,
            text: "1-RP".into(),
            event: e,
        }))
        .unwrap();
        w.append(LogRecord::Frames(frames(3))).unwrap();
        w.flush().unwrap();
        buf.bytes()
    }

    #[test]
    fn round_trip() {
        let entries = read_log_bytes(&sample_log()).unwrap();
        assert_eq!(entries.len(), 3);
        assert_eq!(entries[0].record, LogRecord::Frames(frames(20)));
        assert_eq!(entries[2].seq, 2);
    }

    #[test]
    fn truncation_names_last_good_record() {
        let bytes = sample_log();
        let err = read_log_bytes(&bytes[..bytes.len() - 5]).unwrap_err();
        assert!(matches!(err, LogError::Truncated { .. }), "{err}");
        assert_eq!(err.last_good_seq(), Some(1));
        let err = read_log_bytes(&bytes[..10]).unwrap_err();
        assert_eq!(err.last_good_seq(), None);
    }

    #[test]
    fn flipped_byte_is_corrupt() {
        let mut bytes = sample_log();
        bytes[30] ^= 0x40;
        let err = read_log_bytes(&bytes).unwrap_err();
        assert!(matches!(err, LogError::Corrupt { .. }), "{err}");
        assert!(matches!(read_log_bytes(b"nope"), Err(LogError::BadMagic)));
    }

    #[test]
    fn threaded_log_latches_failures() {
        struct Failing;
        impl Write for Failing {
            fn write(&mut self, _: &[u8]) -> std::io::Result<usize> {
                Err(std::io::Error::other("disk full"))
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let w = LogWriter {
            out: Failing,
            next_seq: 0,
            bytes: 0,
        };
        let mut t = ThreadedLog::spawn(w);
        t.append(LogRecord::Frames(frames(1))).unwrap();
        assert!(t.flush().is_err());
        assert!(t.append(LogRecord::Frames(frames(1))).is_err());
    }
}
