//! Live session loop.
//!
//! [`Engine`] is the single processing stage: frames and commands are applied
//! in the order they arrive, which is also the order they reach the log.
//! [`EngineHandle`] runs it on its own thread behind one ordered queue.

use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crossbeam_channel::{Receiver, Sender};
use serde::{Deserialize, Serialize};
use tremor_core::imu::{dequantize_sample, ImuRecording, SensorConfig, N_CHANNELS};
use tremor_core::session::{format_event, SessionMeta};
use tremor_core::wire::{DecoderStats, Frame, GapTracker};

use crate::command::{Ack, Command, CommandState};
use crate::latency::{LatencyRecorder, LatencyStats};
use crate::log::{
    CommandRecord, ConfigRecord, EndRecord, EventRecord, GapRecord, LogError, LogHeader, LogRecord, LogSink,
    StreamRecord, FRAME_BATCH, LOG_FORMAT_VERSION,
};
use crate::queue::DropOldestQueue;
use crate::report::{pre_analysis_report, PreAnalysisReport};
use crate::view::{ViewProcessor, ViewTransform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub meta: SessionMeta,
    pub sensor: SensorConfig,
    pub view: ViewTransform,
    /// Axes shown on the strip chart, accel xyz, gyro xyz, mag xyz.
    pub axis_mask: [bool; N_CHANNELS],
    /// Samples per view batch.
    pub chunk: usize,
    /// Capacity of each display queue, in batches.
    pub display_capacity: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            meta: SessionMeta::new("anonymous"),
            sensor: SensorConfig::default(),
            view: ViewTransform::Raw,
            axis_mask: [true; N_CHANNELS],
            chunk: 10,
            display_capacity: 64,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Config(m));
        if self.chunk == 0 {
            return bad("chunk must be at least one sample".into());
        }
        if self.display_capacity == 0 {
            return bad("display capacity must be positive".into());
        }
        if let Err(e) = self.sensor.validate() {
            return bad(e.to_string());
        }
        if let Err(e) = self.view.validate(self.sensor.fs) {
            return bad(e.to_string());
        }
        if let Err(e) = self.meta.validate() {
            return bad(e.to_string());
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid engine configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("engine has stopped")]
    Stopped,
}

/// One batch of view output for display sinks.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewBatch {
    pub first_sample: u64,
    pub view_code: u8,
    /// Output channel names, in column order.
    pub channels: Arc<Vec<String>>,
    /// Row-major: `values[i * channels.len() + c]`.
    pub values: Vec<f64>,
    /// Arrival time of each row's frame.
    pub source_times: Vec<Instant>,
}

impl ViewBatch {
    pub fn samples(&self) -> usize {
        self.source_times.len()
    }

    /// Binary WebSocket encoding, see PROTOCOL.md.
    pub fn to_bytes(&self) -> Vec<u8> {
        let w = self.channels.len();
        let mut out = Vec::with_capacity(16 + w + self.values.len() * 4);
        out.extend_from_slice(b"VB");
        out.push(1);
        out.push(self.view_code);
        out.extend_from_slice(&self.first_sample.to_le_bytes());
        out.extend_from_slice(&(self.samples() as u16).to_le_bytes());
        out.push(w as u8);
        out.push(0);
        for v in &self.values {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }
}

/// Decoded header and payload of a binary view batch.
pub fn parse_view_batch(bytes: &[u8]) -> Option<(u8, u64, usize, usize, Vec<f32>)> {
    if bytes.len() < 16 || &bytes[..2] != b"VB" || bytes[2] != 1 {
        return None;
    }
    let code = bytes[3];
    let first = u64::from_le_bytes(bytes[4..12].try_into().ok()?);
    let n = u16::from_le_bytes([bytes[12], bytes[13]]) as usize;
    let w = bytes[14] as usize;
    let body = &bytes[16..];
    if body.len() != n * w * 4 {
        return None;
    }
    let values = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Some((code, first, n, w, values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EngineEvent {
    Gap {
        sample: u64,
        first_missing: u16,
        missing: u16,
    },
    Stream {
        sample: u64,
        bad_crc: u64,
        skipped_bytes: u64,
        #[serde(default)]
        message: Option<String>,
    },
    Task {
        sample: u64,
        task_index: u32,
        text: String,
        closed: bool,
    },
    View {
        sample: u64,
        view: ViewTransform,
    },
    Stopped {
        reason: String,
        frames: u64,
    },
}

#[derive(Debug, Clone)]
pub enum SinkMessage {
    View(Arc<ViewBatch>),
    Event(EngineEvent),
}

pub type DisplaySink = Arc<DropOldestQueue<SinkMessage>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub frames: u64,
    pub next_sample: u64,
    pub gaps: u64,
    pub events: Vec<String>,
    pub latency: LatencyStats,
    /// Batches dropped by each display sink.
    pub display_drops: Vec<u64>,
    pub reason: String,
}

pub fn wall_clock_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn keep_columns(view: &ViewTransform, mask: &[bool; N_CHANNELS]) -> Vec<usize> {
    if view.per_axis() {
        (0..N_CHANNELS).filter(|&c| mask[c]).collect()
    } else {
        let per_group = if matches!(view, ViewTransform::Norm) { 1 } else { 3 };
        (0..3)
            .filter(|g| mask[3 * g..3 * g + 3].iter().any(|m| *m))
            .flat_map(|g| g * per_group..(g + 1) * per_group)
            .collect()
    }
}

pub struct Engine {
    cfg: EngineConfig,
    state: CommandState,
    view: ViewProcessor,
    columns: Vec<usize>,
    column_names: Arc<Vec<String>>,
    gaps: GapTracker,
    gap_count: u64,
    next_sample: u64,
    frames: u64,
    recording: ImuRecording,
    sample_index: Vec<u64>,
    log: Box<dyn LogSink>,
    pending_frames: Vec<Frame>,
    sinks: Vec<DisplaySink>,
    batch: Option<ViewBatch>,
    scratch: Vec<f64>,
    latency: LatencyRecorder,
    finished: bool,
}

impl Engine {
    /// Validates the configuration and writes the log header.
    pub fn new(cfg: EngineConfig, mut log: Box<dyn LogSink>) -> Result<Self, EngineError> {
        cfg.validate()?;
        let state = CommandState::new(cfg.meta.clone(), cfg.view.clone(), cfg.sensor.fs)
            .map_err(|e| EngineError::Config(e.to_string()))?;
        log.append(LogRecord::Header(LogHeader {
            format_version: LOG_FORMAT_VERSION,
            meta: cfg.meta.clone(),
            sensor: cfg.sensor.clone(),
            view: cfg.view.clone(),
            axis_mask: cfg.axis_mask,
            chunk: cfg.chunk,
            started_wall_ms: Some(wall_clock_ms()),
        }))?;
        let view = ViewProcessor::new(&cfg.view, cfg.sensor.fs).map_err(|e| EngineError::Config(e.to_string()))?;
        let mut engine = Self {
            recording: ImuRecording::zeros(0, cfg.sensor.fs),
            state,
            view,
            columns: Vec::new(),
            column_names: Arc::new(Vec::new()),
            gaps: GapTracker::new(),
            gap_count: 0,
            next_sample: 0,
            frames: 0,
            sample_index: Vec::new(),
            log,
            pending_frames: Vec::with_capacity(FRAME_BATCH),
            sinks: Vec::new(),
            batch: None,
            scratch: Vec::with_capacity(N_CHANNELS),
            latency: LatencyRecorder::default(),
            finished: false,
            cfg,
        };
        engine.set_columns();
        Ok(engine)
    }

    fn set_columns(&mut self) {
        let view = self.view.transform().clone();
        self.columns = keep_columns(&view, &self.cfg.axis_mask);
        let names = view.channel_names();
        self.column_names = Arc::new(self.columns.iter().map(|&c| names[c].clone()).collect());
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn state(&self) -> &CommandState {
        &self.state
    }

    pub fn next_sample(&self) -> u64 {
        self.next_sample
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn recording(&self) -> (&ImuRecording, &[u64]) {
        (&self.recording, &self.sample_index)
    }

    pub fn latency(&self) -> LatencyStats {
        self.latency.stats()
    }

    pub fn subscribe(&mut self, sink: DisplaySink) {
        self.sinks.push(sink);
    }

    pub fn report(&self) -> PreAnalysisReport {
        pre_analysis_report(&self.recording, &self.sample_index, self.state.session.events())
    }

    fn emit(&mut self, msg: SinkMessage) {
        self.sinks.retain(|s| !s.is_closed());
        for s in &self.sinks {
            s.push(msg.clone());
        }
    }

    fn flush_frames(&mut self) -> Result<(), EngineError> {
        if !self.pending_frames.is_empty() {
            let frames = std::mem::replace(&mut self.pending_frames, Vec::with_capacity(FRAME_BATCH));
            self.log.append(LogRecord::Frames(frames))?;
        }
        Ok(())
    }

    fn flush_view(&mut self) {
        if let Some(batch) = self.batch.take() {
            let now = Instant::now();
            for t in &batch.source_times {
                self.latency.end_to_end(now.duration_since(*t).as_secs_f64() * 1e3);
            }
            self.emit(SinkMessage::View(Arc::new(batch)));
        }
    }

    /// Dequantizes, transforms, records and logs one frame.
    pub fn process_frame(&mut self, frame: Frame, arrived: Instant) -> Result<(), EngineError> {
        if self.finished {
            return Err(EngineError::Stopped);
        }
        if let Some(gap) = self.gaps.observe(frame.seq) {
            self.flush_frames()?;
            self.gap_count += 1;
            self.log.append(LogRecord::Gap(GapRecord {
                sample: frame.t as u64,
                gap,
            }))?;
            self.emit(SinkMessage::Event(EngineEvent::Gap {
                sample: frame.t as u64,
                first_missing: gap.first_missing,
                missing: gap.missing,
            }));
        }

        let t0 = Instant::now();
        let x = dequantize_sample(&frame.counts, &self.cfg.sensor);
        self.scratch.clear();
        self.view.process(&x, &mut self.scratch);
        self.latency.processing(t0.elapsed().as_secs_f64() * 1e3);

        self.recording.push(&x);
        self.sample_index.push(frame.t as u64);
        self.next_sample = frame.t as u64 + 1;
        self.frames += 1;

        let batch = self.batch.get_or_insert_with(|| ViewBatch {
            first_sample: frame.t as u64,
            view_code: self.view.transform().code(),
            channels: self.column_names.clone(),
            values: Vec::with_capacity(self.cfg.chunk * self.columns.len()),
            source_times: Vec::with_capacity(self.cfg.chunk),
        });
        batch.values.extend(self.columns.iter().map(|&c| self.scratch[c]));
        batch.source_times.push(arrived);
        if batch.samples() >= self.cfg.chunk {
            self.flush_view();
        }

        self.pending_frames.push(frame);
        if self.pending_frames.len() >= FRAME_BATCH {
            self.flush_frames()?;
        }
        Ok(())
    }

    /// Records a decode problem reported by the stream reader.
    pub fn stream_issue(&mut self, stats: DecoderStats, message: Option<String>) -> Result<(), EngineError> {
        self.flush_frames()?;
        let sample = self.next_sample;
        self.log.append(LogRecord::Stream(StreamRecord {
            sample,
            bad_crc: stats.bad_crc,
            skipped_bytes: stats.skipped_bytes,
            message: message.clone(),
        }))?;
        self.emit(SinkMessage::Event(EngineEvent::Stream {
            sample,
            bad_crc: stats.bad_crc,
            skipped_bytes: stats.skipped_bytes,
            message,
        }));
        Ok(())
    }

    /// Applies a command stamped with the current sample index.
    pub fn command(&mut self, cmd: &Command, wall_ms: Option<u64>) -> Result<Ack, EngineError> {
        if self.finished {
            return Err(EngineError::Stopped);
        }
        self.flush_frames()?;
        let sample = self.next_sample;
        let before_view = self.state.view.clone();
        let ack = self.state.apply(cmd, sample, wall_ms);
        self.log.append(LogRecord::Command(CommandRecord {
            sample,
            wall_ms,
            command: cmd.clone(),
            ack: ack.clone(),
        }))?;
        if let (true, Some(idx)) = (ack.ok, ack.task_index) {
            let event = self
                .state
                .session
                .events()
                .iter()
                .find(|e| e.task_index == idx)
                .cloned()
                .expect("acked task exists");
            let text = format_event(&event);
            let closed = event.is_closed();
            self.log.append(LogRecord::Event(EventRecord {
                sample,
                text: text.clone(),
                event,
            }))?;
            self.emit(SinkMessage::Event(EngineEvent::Task {
                sample,
                task_index: idx,
                text,
                closed,
            }));
        }
        if self.state.view != before_view {
            self.flush_view();
            let view = self.state.view.clone();
            self.view = ViewProcessor::new(&view, self.cfg.sensor.fs).expect("view validated by command");
            self.set_columns();
            self.log.append(LogRecord::Config(ConfigRecord {
                sample,
                view: view.clone(),
            }))?;
            self.emit(SinkMessage::Event(EngineEvent::View { sample, view }));
        }
        Ok(ack)
    }

    /// Flushes everything, writes the closing records and closes the sinks.
    pub fn finish(&mut self, reason: &str) -> Result<SessionSummary, EngineError> {
        if !self.finished {
            self.finished = true;
            self.flush_view();
            let result = self.write_trailer(reason);
            self.emit(SinkMessage::Event(EngineEvent::Stopped {
                reason: reason.to_string(),
                frames: self.frames,
            }));
            for s in &self.sinks {
                s.close();
            }
            result?;
        }
        Ok(self.summary(reason))
    }

    fn write_trailer(&mut self, reason: &str) -> Result<(), EngineError> {
        self.flush_frames()?;
        self.log.append(LogRecord::Perf(self.latency.stats()))?;
        self.log.append(LogRecord::End(EndRecord {
            frames: self.frames,
            next_sample: self.next_sample,
            reason: reason.to_string(),
        }))?;
        self.log.flush()?;
        Ok(())
    }

    fn summary(&self, reason: &str) -> SessionSummary {
        SessionSummary {
            frames: self.frames,
            next_sample: self.next_sample,
            gaps: self.gap_count,
            events: self.state.event_strings(),
            latency: self.latency.stats(),
            display_drops: self.sinks.iter().map(|s| s.dropped()).collect(),
            reason: reason.to_string(),
        }
    }

    /// Stops after a hard failure: sinks are told and closed, nothing more
    /// is logged.
    fn abort(&mut self, reason: &str) {
        self.finished = true;
        self.emit(SinkMessage::Event(EngineEvent::Stopped {
            reason: reason.to_string(),
            frames: self.frames,
        }));
        for s in &self.sinks {
            s.close();
        }
    }
}

pub type Responder = Box<dyn FnOnce(Result<Ack, String>) + Send>;

pub enum Input {
    Frame(Frame, Instant),
    Stream(DecoderStats, Option<String>),
    Command {
        cmd: Command,
        wall_ms: Option<u64>,
        reply: Responder,
    },
    Subscribe(DisplaySink),
    Report(Box<dyn FnOnce(PreAnalysisReport) + Send>),
    Status(Box<dyn FnOnce(CommandState, u64) + Send>),
    SourceEnded,
    Shutdown,
}

/// Sending side of the engine queue. Cheap to clone.
#[derive(Clone)]
pub struct EngineClient {
    tx: Sender<Input>,
    display_capacity: usize,
}

impl EngineClient {
    pub fn send(&self, input: Input) -> Result<(), EngineError> {
        self.tx.send(input).map_err(|_| EngineError::Stopped)
    }

    pub fn push_frame(&self, frame: Frame) -> Result<(), EngineError> {
        self.send(Input::Frame(frame, Instant::now()))
    }

    pub fn command_with(&self, cmd: Command, reply: Responder) -> Result<(), EngineError> {
        self.send(Input::Command {
            cmd,
            wall_ms: Some(wall_clock_ms()),
            reply,
        })
    }

    /// Blocking command round trip.
    pub fn command(&self, cmd: Command) -> Result<Ack, EngineError> {
        let (tx, rx) = crossbeam_channel::bounded(1);
        self.command_with(
            cmd,
            Box::new(move |r| {
                let _ = tx.send(r);
            }),
        )?;
        rx.recv().map_err(|_| EngineError::Stopped)?.map_err(|_| EngineError::Stopped)
    }

    pub fn subscribe(&self) -> Result<DisplaySink, EngineError> {
        self.subscribe_with(self.display_capacity)
    }

    pub fn subscribe_with(&self, capacity: usize) -> Result<DisplaySink, EngineError> {
        let q: DisplaySink = Arc::new(DropOldestQueue::new(capacity));
        self.send(Input::Subscribe(q.clone()))?;
        Ok(q)
    }

    pub fn report(&self) -> Result<PreAnalysisReport, EngineError> {
        let (tx, rx) = crossbeam_channel::bounded(1);
        self.send(Input::Report(Box::new(move |r| {
            let _ = tx.send(r);
        })))?;
        rx.recv().map_err(|_| EngineError::Stopped)
    }

    /// Current annotation state and sample index.
    pub fn status(&self) -> Result<(CommandState, u64), EngineError> {
        let (tx, rx) = crossbeam_channel::bounded(1);
        self.send(Input::Status(Box::new(move |s, n| {
            let _ = tx.send((s, n));
        })))?;
        rx.recv().map_err(|_| EngineError::Stopped)
    }

    pub fn end_of_source(&self) -> Result<(), EngineError> {
        self.send(Input::SourceEnded)
    }

    pub fn shutdown(&self) -> Result<(), EngineError> {
        self.send(Input::Shutdown)
    }
}

/// Engine running on its own processing thread.
pub struct EngineHandle {
    client: EngineClient,
    join: Option<JoinHandle<Result<SessionSummary, EngineError>>>,
}

/// Depth of the ordered input queue. Senders block when it is full, so no
/// frame is ever dropped before it reaches the log.
pub const INPUT_QUEUE_DEPTH: usize = 8192;

impl EngineHandle {
    pub fn spawn(engine: Engine) -> Self {
        let (tx, rx) = crossbeam_channel::bounded(INPUT_QUEUE_DEPTH);
        let client = EngineClient {
            tx,
            display_capacity: engine.cfg.display_capacity,
        };
        let join = std::thread::Builder::new()
            .name("engine".into())
            .spawn(move || run_loop(engine, rx))
            .expect("spawn engine thread");
        Self {
            client,
            join: Some(join),
        }
    }

    pub fn client(&self) -> EngineClient {
        self.client.clone()
    }

    /// Waits for the session to end (source exhausted or shutdown).
    pub fn wait(mut self) -> Result<SessionSummary, EngineError> {
        let join = self.join.take().expect("joined once");
        drop(self);
        join.join().unwrap_or(Err(EngineError::Stopped))
    }

    pub fn shutdown(self) -> Result<SessionSummary, EngineError> {
        let _ = self.client.shutdown();
        self.wait()
    }
}

fn run_loop(mut engine: Engine, rx: Receiver<Input>) -> Result<SessionSummary, EngineError> {
    let mut reason = "all clients disconnected".to_string();
    for input in rx.iter() {
        let step = match input {
            Input::Frame(f, at) => engine.process_frame(f, at),
            Input::Stream(stats, msg) => engine.stream_issue(stats, msg),
            Input::Command { cmd, wall_ms, reply } => match engine.command(&cmd, wall_ms) {
                Ok(ack) => {
                    reply(Ok(ack));
                    Ok(())
                }
                Err(e) => {
                    reply(Err(e.to_string()));
                    Err(e)
                }
            },
            Input::Subscribe(q) => {
                engine.subscribe(q);
                Ok(())
            }
            Input::Report(f) => {
                f(engine.report());
                Ok(())
            }
            Input::Status(f) => {
                f(engine.state.clone(), engine.next_sample);
                Ok(())
            }
            Input::SourceEnded => {
                reason = "source ended".into();
                break;
            }
            Input::Shutdown => {
                reason = "shutdown".into();
                break;
            }
        };
        if let Err(e) = step {
            ::log::error!("engine stopped: {e}");
            engine.abort(&e.to_string());
            return Err(e);
        }
    }
    engine.finish(&reason)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::{read_log_bytes, LogWriter, SharedBuffer};

    fn frame(i: u32) -> Frame {
        Frame {
            seq: i as u16,
            t: i,
            counts: [i as i16; 9],
            flags: 0,
        }
    }

    fn engine(cfg: EngineConfig) -> (Engine, SharedBuffer) {
        let buf = SharedBuffer::default();
        let e = Engine::new(cfg, Box::new(LogWriter::new(buf.clone()).unwrap())).unwrap();
        (e, buf)
    }

    #[test]
    fn commands_are_stamped_and_logged_in_order() {
        let (mut e, buf) = engine(EngineConfig::default());
        let now = Instant::now();
        for i in 0..25 {
            e.process_frame(frame(i), now).unwrap();
        }
        let ack = e.command(&Command::StartTask { task: "RP".into() }, None).unwrap();
        assert_eq!(ack.sample, 25);
        for i in 25..50 {
            e.process_frame(frame(i), now).unwrap();
        }
        let ack = e.command(&Command::StopTask, None).unwrap();
        assert_eq!(ack.event.as_deref(), Some("1-RP"));
        e.finish("test").unwrap();
        let entries = read_log_bytes(&buf.bytes()).unwrap();
        let kinds: Vec<u8> = entries.iter().map(|x| x.record.kind()).collect();
        assert_eq!(kinds, vec![1, 2, 2, 3, 4, 2, 2, 3, 4, 8, 9]);
    }

    #[test]
    fn gaps_are_logged_and_published() {
        let (mut e, _) = engine(EngineConfig::default());
        let q: DisplaySink = Arc::new(DropOldestQueue::new(100));
        e.subscribe(q.clone());
        for i in [0, 1, 2, 5, 6] {
            e.process_frame(frame(i), Instant::now()).unwrap();
        }
        let s = e.finish("done").unwrap();
        assert_eq!(s.gaps, 1);
        let msgs: Vec<SinkMessage> = std::iter::from_fn(|| q.try_recv()).collect();
        assert!(msgs.iter().any(|m| matches!(
            m,
            SinkMessage::Event(EngineEvent::Gap { first_missing: 3, missing: 2, .. })
        )));
    }

    #[test]
    fn axis_mask_selects_columns() {
        let cfg = EngineConfig {
            axis_mask: [true, false, false, false, false, false, false, false, true],
            chunk: 2,
            ..EngineConfig::default()
        };
        let (mut e, _) = engine(cfg);
        let q: DisplaySink = Arc::new(DropOldestQueue::new(10));
        e.subscribe(q.clone());
        e.process_frame(frame(0), Instant::now()).unwrap();
        e.process_frame(frame(1), Instant::now()).unwrap();
        let Some(SinkMessage::View(b)) = q.try_recv() else { panic!() };
        assert_eq!(*b.channels, vec!["accel_x".to_string(), "mag_z".to_string()]);
        assert_eq!(b.values.len(), 4);
        let (code, first, n, w, vals) = parse_view_batch(&b.to_bytes()).unwrap();
        assert_eq!((code, first, n, w), (0, 0, 2, 2));
        assert_eq!(vals[2], (1.0 / 15.0) as f32);
        e.command(&Command::SetView { view: ViewTransform::Norm }, None).unwrap();
        e.process_frame(frame(2), Instant::now()).unwrap();
        e.process_frame(frame(3), Instant::now()).unwrap();
        let batches: Vec<_> = std::iter::from_fn(|| q.try_recv())
            .filter_map(|m| match m {
                SinkMessage::View(b) => Some(b),
                _ => None,
            })
            .collect();
        assert_eq!(*batches[0].channels, vec!["accel_norm".to_string(), "mag_norm".to_string()]);
    }

    #[test]
    fn threaded_engine_round_trip() {
        let buf = SharedBuffer::default();
        let e = Engine::new(EngineConfig::default(), Box::new(LogWriter::new(buf.clone()).unwrap())).unwrap();
        let h = EngineHandle::spawn(e);
        let c = h.client();
        for i in 0..10 {
            c.push_frame(frame(i)).unwrap();
        }
        assert!(c.command(Command::StartTask { task: "PP".into() }).unwrap().ok);
        for i in 10..20 {
            c.push_frame(frame(i)).unwrap();
        }
        let ack = c.command(Command::StopTask).unwrap();
        assert_eq!((ack.sample, ack.event.as_deref()), (20, Some("1-PP")));
        assert_eq!(c.report().unwrap().tasks[0].samples, 10);
        let s = h.shutdown().unwrap();
        assert_eq!(s.frames, 20);
        assert_eq!(s.reason, "shutdown");
        assert!(c.command(Command::Status).is_err());
    }
}
