//! Real-time session engine for the simulated tremor sensor: ordered frame
//! and command processing, view transforms, display fan-out, session log,
//! replay, pre-analysis reports and the WebSocket API.
// `!(x > 0.0)` rejects NaN on purpose; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod command;
pub mod engine;
pub mod latency;
pub mod log;
pub mod queue;
pub mod replay;
pub mod report;
pub mod server;
pub mod source;
pub mod view;

pub use command::{Ack, Command, CommandState};
pub use engine::{Engine, EngineClient, EngineConfig, EngineError, EngineHandle, SessionSummary};
pub use replay::{replay_log, ReplayedSession};
pub use report::{pre_analysis_report, PreAnalysisReport};
