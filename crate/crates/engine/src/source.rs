//! Frame sources: simulated sessions, byte streams and real-time pacing.

use std::io::Read;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use tremor_core::imu::{quantize, Channel, SensorConfig, N_CHANNELS};
use tremor_core::session::MotorTaskKind;
use tremor_core::sim::{synth_task, SimError, TaskScenario};
use tremor_core::wire::{encode_frame, Frame, StreamDecoder, FLAG_SATURATED};

use crate::engine::{EngineClient, Input};

/// A simulated recording as wire frames plus the span of each task.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedStream {
    pub frames: Vec<Frame>,
    /// (task, first sample, end sample) per scenario, back to back.
    pub spans: Vec<(MotorTaskKind, u64, u64)>,
    pub saturated: u64,
}

fn is_saturated(counts: &[i16; N_CHANNELS], cfg: &SensorConfig) -> bool {
    Channel::all().any(|c| {
        let lim = cfg.count_limit(c.group());
        counts[c.0] == lim || counts[c.0] == -lim
    })
}

/// Synthesizes the scenarios back to back, starting at sample `first_t`
/// with sequence number `first_seq`.
pub fn simulate_frames(
    scenarios: &[TaskScenario],
    cfg: &SensorConfig,
    first_t: u32,
    first_seq: u16,
) -> Result<SimulatedStream, SimError> {
    let mut frames = Vec::new();
    let mut spans = Vec::new();
    let mut saturated = 0;
    let mut t = first_t;
    let mut seq = first_seq;
    for sc in scenarios {
        let rec = synth_task(sc, cfg)?;
        let (raw, stats) = quantize(&rec, cfg, t);
        saturated += stats.total();
        spans.push((sc.task.clone(), t as u64, t as u64 + raw.len() as u64));
        for r in &raw {
            let flags = if is_saturated(&r.counts, cfg) { FLAG_SATURATED } else { 0 };
            frames.push(Frame::from_raw(seq, r, flags));
            seq = seq.wrapping_add(1);
        }
        t += raw.len() as u32;
    }
    Ok(SimulatedStream {
        frames,
        spans,
        saturated,
    })
}

/// Endless simulated stream cycling through `scenarios`, re-seeding each
/// block so consecutive blocks differ.
pub struct ScenarioCycle {
    scenarios: Vec<TaskScenario>,
    cfg: SensorConfig,
    block: usize,
    t: u32,
    seq: u16,
    buf: std::vec::IntoIter<Frame>,
}

impl ScenarioCycle {
    pub fn new(scenarios: Vec<TaskScenario>, cfg: SensorConfig) -> Self {
        assert!(!scenarios.is_empty(), "need at least one scenario");
        Self {
            scenarios,
            cfg,
            block: 0,
            t: 0,
            seq: 0,
            buf: Vec::new().into_iter(),
        }
    }
}

impl Iterator for ScenarioCycle {
    type Item = Frame;

    fn next(&mut self) -> Option<Frame> {
        if let Some(f) = self.buf.next() {
            return Some(f);
        }
        let mut sc = self.scenarios[self.block % self.scenarios.len()].clone();
        sc.seed = sc.seed.wrapping_add(self.block as u64);
        self.block += 1;
        let s = simulate_frames(&[sc], &self.cfg, self.t, self.seq).ok()?;
        self.t += s.frames.len() as u32;
        self.seq = self.seq.wrapping_add(s.frames.len() as u16);
        self.buf = s.frames.into_iter();
        self.buf.next()
    }
}

pub fn encode_stream(frames: &[Frame]) -> Vec<u8> {
    frames.iter().flat_map(encode_frame).collect()
}

/// Feeds frames at `fs` frames per second, stamping each with its send time.
/// Ends the session when the iterator is exhausted and `end_session` is set.
pub fn spawn_paced<I>(frames: I, fs: f64, client: EngineClient, stop: Arc<AtomicBool>, end_session: bool) -> JoinHandle<u64>
where
    I: IntoIterator<Item = Frame> + Send + 'static,
    I::IntoIter: Send,
{
    std::thread::Builder::new()
        .name("paced-source".into())
        .spawn(move || {
            let period = Duration::from_secs_f64(1.0 / fs);
            let start = Instant::now();
            let mut sent = 0u64;
            for f in frames {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let due = start + period * sent as u32;
                let now = Instant::now();
                if due > now {
                    std::thread::sleep(due - now);
                }
                if client.send(Input::Frame(f, Instant::now())).is_err() {
                    return sent;
                }
                sent += 1;
            }
            if end_session {
                let _ = client.end_of_source();
            }
            sent
        })
        .expect("spawn source thread")
}

/// Decodes a byte stream into the engine. Decoder trouble is reported as a
/// stream event; a read error ends the session with an error event.
pub fn spawn_reader<R: Read + Send + 'static>(mut input: R, client: EngineClient, end_session: bool) -> JoinHandle<u64> {
    std::thread::Builder::new()
        .name("stream-reader".into())
        .spawn(move || {
            let mut dec = StreamDecoder::new();
            let mut buf = vec![0u8; 4096];
            let mut last = dec.stats();
            loop {
                let n = match input.read(&mut buf) {
                    Ok(0) => break,
                    Ok(n) => n,
                    Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                    Err(e) => {
                        let _ = client.send(Input::Stream(dec.stats(), Some(format!("read error: {e}"))));
                        break;
                    }
                };
                for f in dec.push(&buf[..n]) {
                    if client.send(Input::Frame(f, Instant::now())).is_err() {
                        return dec.stats().frames;
                    }
                }
                let s = dec.stats();
                if s.bad_crc != last.bad_crc || s.skipped_bytes != last.skipped_bytes {
                    let _ = client.send(Input::Stream(s, None));
                    last = s;
                }
            }
            if dec.pending() > 0 {
                let _ = client.send(Input::Stream(
                    dec.stats(),
                    Some(format!("{} trailing bytes without a complete frame", dec.pending())),
                ));
            }
            if end_session {
                let _ = client.end_of_source();
            }
            dec.stats().frames
        })
        .expect("spawn reader thread")
}

#[cfg(test)]
mod tests {
    use super::*;
    use tremor_core::wire::detect_gaps;

    #[test]
    fn back_to_back_tasks() {
        let cfg = SensorConfig::default();
        let mut rp = TaskScenario::rest(1);
        rp.duration_s = 2.0;
        let mut pp = TaskScenario::posture(2);
        pp.duration_s = 3.0;
        let s = simulate_frames(&[rp, pp], &cfg, 0, 65_500).unwrap();
        assert_eq!(s.frames.len(), 1000);
        assert_eq!(s.spans[1], (MotorTaskKind::Posture, 400, 1000));
        assert_eq!(detect_gaps(s.frames.iter().map(|f| f.seq)).count(), 0);
        assert_eq!(s.saturated, 0);
        assert!(s.frames.iter().all(|f| f.flags == 0));
    }

    #[test]
    fn cycle_continues_numbering() {
        let mut rp = TaskScenario::rest(1);
        rp.duration_s = 0.5;
        let frames: Vec<Frame> = ScenarioCycle::new(vec![rp], SensorConfig::default()).take(250).collect();
        assert!(frames.iter().enumerate().all(|(i, f)| f.t == i as u32 && f.seq == i as u16));
        assert_ne!(frames[10].counts, frames[110].counts);
    }
}
