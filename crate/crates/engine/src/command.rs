//! Session commands and the state machine that applies them.

use serde::{Deserialize, Serialize};
use tremor_core::session::{
    apply_dbs_step, format_event, AmplitudeUnit, DbsField, DbsParams, MotorTaskKind, RatingScore, Session,
    SessionError, SessionMeta, SideEffect,
};

use crate::view::ViewTransform;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Command {
    StartTask {
        task: String,
    },
    StopTask,
    Score {
        value: u8,
    },
    /// Changes the pending DBS value; nothing is recorded until `dbs_set`.
    DbsStep {
        field: DbsField,
        step: f64,
    },
    /// Commits the pending DBS values (optionally replaced first) to the
    /// open task.
    DbsSet {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        params: Option<DbsParams>,
    },
    /// 1-based drop-down option; 6 is speech impairment.
    SideEffect {
        option: u8,
    },
    SetPoint,
    SetView {
        view: ViewTransform,
    },
    RegisterTask {
        label: String,
    },
    Status,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::StartTask { .. } => "start_task",
            Command::StopTask => "stop_task",
            Command::Score { .. } => "score",
            Command::DbsStep { .. } => "dbs_step",
            Command::DbsSet { .. } => "dbs_set",
            Command::SideEffect { .. } => "side_effect",
            Command::SetPoint => "set_point",
            Command::SetView { .. } => "set_view",
            Command::RegisterTask { .. } => "register_task",
            Command::Status => "status",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub ok: bool,
    pub cmd: String,
    /// Sample index the command was stamped with.
    pub sample: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_index: Option<u32>,
    /// Event string of the task the command touched.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
    pub pending_dbs: DbsParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view: Option<ViewTransform>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum CommandError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("unknown task label {0:?}")]
    UnknownTask(String),
    #[error("side effect option {0} outside 1-8")]
    SideEffectOption(u8),
    #[error("invalid view: {0}")]
    InvalidView(String),
}

/// Annotation state driven by commands. Every effect depends only on the
/// prior state, the command, the sample index and the wall time passed in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandState {
    pub session: Session,
    pub pending_dbs: DbsParams,
    pub view: ViewTransform,
    pub fs: f64,
}

/// Pending DBS values before any device settings are known.
pub fn default_dbs() -> DbsParams {
    DbsParams::new(2.0, AmplitudeUnit::MilliAmp, 130, 60).expect("valid default DBS")
}

impl CommandState {
    pub fn new(meta: SessionMeta, view: ViewTransform, fs: f64) -> Result<Self, SessionError> {
        let pending_dbs = meta.dbs_device.as_ref().map_or_else(default_dbs, |d| d.initial);
        Ok(Self {
            session: Session::new(meta)?,
            pending_dbs,
            view,
            fs,
        })
    }

    fn resolve_task(&self, label: &str) -> Result<MotorTaskKind, CommandError> {
        MotorTaskKind::builtin(label)
            .or_else(|| self.session.catalog.lookup(label))
            .ok_or_else(|| CommandError::UnknownTask(label.to_string()))
    }

    fn run(&mut self, cmd: &Command, sample: u64, wall_ms: Option<u64>) -> Result<Option<u32>, CommandError> {
        let touched = match cmd {
            Command::StartTask { task } => {
                let kind = self.resolve_task(task)?;
                Some(self.session.start_task(kind, sample, wall_ms)?)
            }
            Command::StopTask => Some(self.session.stop_task(sample)?.task_index),
            Command::Score { value } => Some(self.session.score(RatingScore::new(*value)?)?.task_index),
            Command::DbsStep { field, step } => {
                self.pending_dbs = apply_dbs_step(self.pending_dbs, *field, *step)?;
                None
            }
            Command::DbsSet { params } => {
                let p = params.unwrap_or(self.pending_dbs);
                let idx = self.session.set_dbs(p)?.task_index;
                self.pending_dbs = p;
                Some(idx)
            }
            Command::SideEffect { option } => {
                let se = SideEffect::from_option(*option).ok_or(CommandError::SideEffectOption(*option))?;
                Some(self.session.side_effect(se)?.task_index)
            }
            Command::SetPoint => Some(self.session.set_point()?.task_index),
            Command::SetView { view } => {
                view.validate(self.fs).map_err(|e| CommandError::InvalidView(e.to_string()))?;
                self.view = view.clone();
                None
            }
            Command::RegisterTask { label } => {
                self.session.catalog.register(label)?;
                None
            }
            Command::Status => None,
        };
        Ok(touched)
    }

    /// Applies a command stamped with `sample`. A rejected command leaves the
    /// state untouched.
    pub fn apply(&mut self, cmd: &Command, sample: u64, wall_ms: Option<u64>) -> Ack {
        let before_view = self.view.clone();
        let result = self.run(cmd, sample, wall_ms);
        let (ok, task_index, error) = match result {
            Ok(idx) => (true, idx, None),
            Err(e) => (false, None, Some(e.to_string())),
        };
        let event = task_index
            .and_then(|i| self.session.events().iter().find(|e| e.task_index == i))
            .map(format_event);
        let view_changed = self.view != before_view;
        Ack {
            ok,
            cmd: cmd.name().to_string(),
            sample,
            task_index,
            event,
            pending_dbs: self.pending_dbs,
            view: (view_changed || matches!(cmd, Command::Status)).then(|| self.view.clone()),
            events: matches!(cmd, Command::Status).then(|| self.event_strings()),
            error,
        }
    }

    pub fn event_strings(&self) -> Vec<String> {
        self.session.events().iter().map(format_event).collect()
    }
}
