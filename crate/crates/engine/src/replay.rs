//! Offline reconstruction of a session from its log.

use std::path::Path;

use tremor_core::imu::{dequantize_sample, ImuRecording};
use tremor_core::wire::Frame;

use crate::command::CommandState;
use crate::latency::LatencyStats;
use crate::log::{
    read_log_bytes, read_log_file, CommandRecord, ConfigRecord, EndRecord, GapRecord, LogEntry, LogError, LogHeader,
    LogRecord, StreamRecord,
};
use crate::report::{pre_analysis_report, PreAnalysisReport};

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayedSession {
    pub header: LogHeader,
    pub frames: Vec<Frame>,
    /// Annotation state rebuilt by re-applying every logged command.
    pub state: CommandState,
    pub commands: Vec<CommandRecord>,
    pub configs: Vec<ConfigRecord>,
    pub gaps: Vec<GapRecord>,
    pub stream_issues: Vec<StreamRecord>,
    pub perf: Option<LatencyStats>,
    /// Present when the session was closed cleanly.
    pub end: Option<EndRecord>,
}

impl ReplayedSession {
    pub fn recording(&self) -> (ImuRecording, Vec<u64>) {
        let mut rec = ImuRecording::zeros(0, self.header.sensor.fs);
        let mut idx = Vec::with_capacity(self.frames.len());
        for f in &self.frames {
            rec.push(&dequantize_sample(&f.counts, &self.header.sensor));
            idx.push(f.t as u64);
        }
        (rec, idx)
    }

    pub fn report(&self) -> PreAnalysisReport {
        let (rec, idx) = self.recording();
        pre_analysis_report(&rec, &idx, self.state.session.events())
    }

    pub fn event_strings(&self) -> Vec<String> {
        self.state.event_strings()
    }
}

fn diverged(seq: u64, reason: impl Into<String>) -> LogError {
    LogError::Divergence {
        seq,
        reason: reason.into(),
    }
}

/// Rebuilds a session. Each logged command is re-applied to fresh state;
/// the result must reproduce the logged ack, event snapshot and view change.
pub fn replay_entries(entries: Vec<LogEntry>) -> Result<ReplayedSession, LogError> {
    let mut it = entries.into_iter();
    let header = match it.next() {
        Some(LogEntry {
            record: LogRecord::Header(h),
            ..
        }) => h,
        _ => return Err(LogError::MissingHeader),
    };
    let mut state = CommandState::new(header.meta.clone(), header.view.clone(), header.sensor.fs)
        .map_err(|e| diverged(0, e.to_string()))?;
    let mut out = ReplayedSession {
        header,
        frames: Vec::new(),
        state: state.clone(),
        commands: Vec::new(),
        configs: Vec::new(),
        gaps: Vec::new(),
        stream_issues: Vec::new(),
        perf: None,
        end: None,
    };
    let mut view_before_last = state.view.clone();
    for LogEntry { seq, record } in it {
        if out.end.is_some() {
            return Err(diverged(seq, "record after end of session"));
        }
        match record {
            LogRecord::Header(_) => return Err(diverged(seq, "second header")),
            LogRecord::Frames(f) => out.frames.extend(f),
            LogRecord::Command(c) => {
                view_before_last = state.view.clone();
                let ack = state.apply(&c.command, c.sample, c.wall_ms);
                if ack != c.ack {
                    return Err(diverged(seq, format!("ack {:?} differs from logged {:?}", ack, c.ack)));
                }
                let expected = out.frames.last().map_or(0, |f| f.t as u64 + 1);
                if c.sample != expected {
                    return Err(diverged(seq, format!("command stamped {} after sample {}", c.sample, expected)));
                }
                out.commands.push(c);
            }
            LogRecord::Event(e) => {
                let live = state.session.events().iter().find(|x| x.task_index == e.event.task_index);
                if live != Some(&e.event) {
                    return Err(diverged(seq, format!("event {} differs from replayed state", e.text)));
                }
            }
            LogRecord::Config(c) => {
                if c.view != state.view || c.view == view_before_last {
                    return Err(diverged(seq, "view change not produced by the preceding command"));
                }
                out.configs.push(c);
            }
            LogRecord::Gap(g) => out.gaps.push(g),
            LogRecord::Stream(s) => out.stream_issues.push(s),
            LogRecord::Perf(p) => out.perf = Some(p),
            LogRecord::End(e) => {
                if e.frames != out.frames.len() as u64 {
                    return Err(diverged(seq, format!("end record counts {} frames, log holds {}", e.frames, out.frames.len())));
                }
                out.end = Some(e);
            }
        }
    }
    out.state = state;
    Ok(out)
}

pub fn replay_log(path: &Path) -> Result<ReplayedSession, LogError> {
    replay_entries(read_log_file(path)?)
}

pub fn replay_bytes(bytes: &[u8]) -> Result<ReplayedSession, LogError> {
    replay_entries(read_log_bytes(bytes)?)
}
