//! Clinical session model: motor tasks, rating scores, DBS parameters,
//! side effects, session metadata and the compact annotation event strings
//! shown in the event list (e.g. `5-FN/S3/DBS-3.5V-130Hz-60us/SE6`).
//!
//! Event string grammar, fields always in this order:
//!
//! ```text
//! EVENT := INDEX "-" TASK ["/S" DIGIT] ["/DBS-" AMP UNIT "-" FREQ "Hz-" PW "us"] ["/SE" OPTION] ["/SP"]
//! INDEX := [1-9][0-9]*          AMP  := [0-9]+ "." [0-9]     UNIT := "mA" | "V"
//! FREQ  := [1-9][0-9]*          PW   := [1-9][0-9]*          OPTION := [1-8]
//! ```

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

// ---------------------------------------------------------------------------
// Motor tasks
// ---------------------------------------------------------------------------

/// A visually guided hand movement examined during a session.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MotorTaskKind {
    /// Rest position (RP).
    Rest,
    /// Posture position (PP), arms extended.
    Posture,
    /// Finger to nose (FN).
    FingerToNose,
    /// Hand movement (HM), e.g. pronation/supination.
    HandMovement,
    /// Site-specific task registered in a [`TaskCatalog`].
    Custom(String),
}

impl MotorTaskKind {
    pub const BUILTIN: [MotorTaskKind; 4] = [
        MotorTaskKind::Rest,
        MotorTaskKind::Posture,
        MotorTaskKind::FingerToNose,
        MotorTaskKind::HandMovement,
    ];

    pub fn label(&self) -> &str {
        match self {
            MotorTaskKind::Rest => "RP",
            MotorTaskKind::Posture => "PP",
            MotorTaskKind::FingerToNose => "FN",
            MotorTaskKind::HandMovement => "HM",
            MotorTaskKind::Custom(label) => label,
        }
    }

    /// Looks up one of the four built-in labels.
    pub fn builtin(label: &str) -> Option<MotorTaskKind> {
        Self::BUILTIN.iter().find(|k| k.label() == label).cloned()
    }
}

impl fmt::Display for MotorTaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// The set of task labels a session accepts: the four built-ins plus any
/// registered custom tasks.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskCatalog {
    custom: Vec<String>,
}

impl TaskCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a custom task. Labels are ASCII alphanumeric (plus `_`),
    /// non-empty and distinct from every label already known.
    pub fn register(&mut self, label: &str) -> Result<MotorTaskKind, SessionError> {
        let valid = !label.is_empty()
            && label.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_');
        if !valid {
            return Err(SessionError::InvalidTaskLabel(label.to_string()));
        }
        if self.lookup(label).is_some() {
            return Err(SessionError::DuplicateTaskLabel(label.to_string()));
        }
        self.custom.push(label.to_string());
        Ok(MotorTaskKind::Custom(label.to_string()))
    }

    pub fn lookup(&self, label: &str) -> Option<MotorTaskKind> {
        MotorTaskKind::builtin(label).or_else(|| {
            self.custom
                .iter()
                .find(|c| c.as_str() == label)
                .map(|c| MotorTaskKind::Custom(c.clone()))
        })
    }

    pub fn kinds(&self) -> Vec<MotorTaskKind> {
        let mut kinds = MotorTaskKind::BUILTIN.to_vec();
        kinds.extend(self.custom.iter().cloned().map(MotorTaskKind::Custom));
        kinds
    }
}

// ---------------------------------------------------------------------------
// Rating score, side effects
// ---------------------------------------------------------------------------

/// Tremor rating, 0 (absent) to 4 (severe).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct RatingScore(u8);

impl RatingScore {
    pub const MAX: u8 = 4;

    pub fn new(value: u8) -> Result<Self, SessionError> {
        if value <= Self::MAX {
            Ok(Self(value))
        } else {
            Err(SessionError::ScoreOutOfRange(value as u32))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for RatingScore {
    type Error = SessionError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<RatingScore> for u8 {
    fn from(s: RatingScore) -> u8 {
        s.0
    }
}

/// Side effect noted during stimulation, in drop-down order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SideEffect {
    None,
    MuscleCramps,
    Paraesthesia,
    Headache,
    Dyskinesia,
    SpeechImpairment,
    VisualComplaint,
    CognitiveImpairment,
}

impl SideEffect {
    pub const ALL: [SideEffect; 8] = [
        SideEffect::None,
        SideEffect::MuscleCramps,
        SideEffect::Paraesthesia,
        SideEffect::Headache,
        SideEffect::Dyskinesia,
        SideEffect::SpeechImpairment,
        SideEffect::VisualComplaint,
        SideEffect::CognitiveImpairment,
    ];

    /// Zero-based code, 0 = none.
    pub fn code(self) -> u8 {
        Self::ALL.iter().position(|&s| s == self).unwrap() as u8
    }

    pub fn from_code(code: u8) -> Option<SideEffect> {
        Self::ALL.get(code as usize).copied()
    }

    /// One-based position in the drop-down menu, as written after `SE`.
    pub fn option(self) -> u8 {
        self.code() + 1
    }

    pub fn from_option(option: u8) -> Option<SideEffect> {
        option.checked_sub(1).and_then(Self::from_code)
    }

    pub fn description(self) -> &'static str {
        match self {
            SideEffect::None => "none",
            SideEffect::MuscleCramps => "muscle cramps",
            SideEffect::Paraesthesia => "paraesthesia",
            SideEffect::Headache => "headache",
            SideEffect::Dyskinesia => "dyskinesia",
            SideEffect::SpeechImpairment => "speech impairment",
            SideEffect::VisualComplaint => "visual complaint",
            SideEffect::CognitiveImpairment => "cognitive impairment",
        }
    }
}

// ---------------------------------------------------------------------------
// DBS parameters
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AmplitudeUnit {
    #[serde(rename = "mA")]
    MilliAmp,
    #[serde(rename = "V")]
    Volt,
}

impl AmplitudeUnit {
    pub fn symbol(self) -> &'static str {
        match self {
            AmplitudeUnit::MilliAmp => "mA",
            AmplitudeUnit::Volt => "V",
        }
    }
}

/// Stimulation amplitude held on the 0.1 grid as an integer count of tenths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Amplitude {
    pub tenths: u16,
    pub unit: AmplitudeUnit,
}

impl Amplitude {
    pub const MIN_TENTHS: u16 = 1;
    pub const MAX_TENTHS: u16 = 200;

    pub fn new(value: f64, unit: AmplitudeUnit) -> Result<Self, SessionError> {
        let tenths = (value * 10.0).round();
        if (value * 10.0 - tenths).abs() > 1e-6
            || tenths < Self::MIN_TENTHS as f64
            || tenths > Self::MAX_TENTHS as f64
        {
            return Err(SessionError::DbsOutOfRange {
                field: DbsField::Amplitude,
                value,
            });
        }
        Ok(Self {
            tenths: tenths as u16,
            unit,
        })
    }

    pub fn value(self) -> f64 {
        self.tenths as f64 / 10.0
    }
}

impl fmt::Display for Amplitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}{}", self.tenths / 10, self.tenths % 10, self.unit.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DbsField {
    Amplitude,
    Frequency,
    PulseWidth,
}

impl fmt::Display for DbsField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DbsField::Amplitude => "amplitude",
            DbsField::Frequency => "frequency",
            DbsField::PulseWidth => "pulse width",
        })
    }
}

/// Deep brain stimulation settings.
///
/// Amplitude 0.1–20.0 on a 0.1 grid, frequency 2–255 Hz, pulse width
/// 10–450 µs in multiples of 10.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DbsParams {
    pub amplitude: Amplitude,
    pub frequency_hz: u16,
    pub pulse_width_us: u16,
}

impl DbsParams {
    pub const FREQ_RANGE: (u16, u16) = (2, 255);
    pub const PULSE_WIDTH_RANGE: (u16, u16) = (10, 450);

    pub fn new(
        amplitude: f64,
        unit: AmplitudeUnit,
        frequency_hz: u16,
        pulse_width_us: u16,
    ) -> Result<Self, SessionError> {
        let params = Self {
            amplitude: Amplitude::new(amplitude, unit)?,
            frequency_hz,
            pulse_width_us,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        let a = self.amplitude.tenths;
        if !(Amplitude::MIN_TENTHS..=Amplitude::MAX_TENTHS).contains(&a) {
            return Err(SessionError::DbsOutOfRange {
                field: DbsField::Amplitude,
                value: self.amplitude.value(),
            });
        }
        let (lo, hi) = Self::FREQ_RANGE;
        if !(lo..=hi).contains(&self.frequency_hz) {
            return Err(SessionError::DbsOutOfRange {
                field: DbsField::Frequency,
                value: self.frequency_hz as f64,
            });
        }
        let (lo, hi) = Self::PULSE_WIDTH_RANGE;
        if !(lo..=hi).contains(&self.pulse_width_us) || !self.pulse_width_us.is_multiple_of(10) {
            return Err(SessionError::DbsOutOfRange {
                field: DbsField::PulseWidth,
                value: self.pulse_width_us as f64,
            });
        }
        Ok(())
    }
}

impl Default for DbsParams {
    fn default() -> Self {
        Self {
            amplitude: Amplitude {
                tenths: 10,
                unit: AmplitudeUnit::MilliAmp,
            },
            frequency_hz: 130,
            pulse_width_us: 60,
        }
    }
}

impl fmt::Display for DbsParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "DBS-{}-{}Hz-{}us",
            self.amplitude, self.frequency_hz, self.pulse_width_us
        )
    }
}

/// Permitted increments per field, in field units (amplitude in tenths).
fn permitted_steps(field: DbsField) -> &'static [i32] {
    match field {
        DbsField::Amplitude => &[1, 5],
        DbsField::Frequency => &[1, 2, 5, 10],
        DbsField::PulseWidth => &[10],
    }
}

/// Changes one DBS field by `step` (in mA/V, Hz or µs), clamping the result
/// to the legal range. Steps must be one of the programmer's increments:
/// amplitude ±0.1/±0.5, frequency ±1/±2/±5/±10, pulse width ±10.
pub fn apply_dbs_step(params: DbsParams, field: DbsField, step: f64) -> Result<DbsParams, SessionError> {
    let units = match field {
        DbsField::Amplitude => step * 10.0,
        _ => step,
    };
    let rounded = units.round();
    let magnitude = rounded.abs() as i32;
    if (units - rounded).abs() > 1e-6 || !permitted_steps(field).contains(&magnitude) {
        return Err(SessionError::IllegalStep { field, step });
    }
    let delta = rounded as i32;
    let mut out = params;
    match field {
        DbsField::Amplitude => {
            let v = (params.amplitude.tenths as i32 + delta)
                .clamp(Amplitude::MIN_TENTHS as i32, Amplitude::MAX_TENTHS as i32);
            out.amplitude.tenths = v as u16;
        }
        DbsField::Frequency => {
            let (lo, hi) = DbsParams::FREQ_RANGE;
            out.frequency_hz = (params.frequency_hz as i32 + delta).clamp(lo as i32, hi as i32) as u16;
        }
        DbsField::PulseWidth => {
            let (lo, hi) = DbsParams::PULSE_WIDTH_RANGE;
            out.pulse_width_us =
                (params.pulse_width_us as i32 + delta).clamp(lo as i32, hi as i32) as u16;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Annotation events
// ---------------------------------------------------------------------------

/// One annotated motor task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationEvent {
    pub task_index: u32,
    pub task: MotorTaskKind,
    pub score: Option<RatingScore>,
    pub dbs: Option<DbsParams>,
    pub side_effect: Option<SideEffect>,
    pub set_point: bool,
    /// Start frame, and end frame (exclusive) once the task is closed.
    pub sample_start: Option<u64>,
    pub sample_end: Option<u64>,
    /// Milliseconds since the Unix epoch when the task was opened.
    pub wall_time_ms: Option<u64>,
}

impl AnnotationEvent {
    pub fn new(task_index: u32, task: MotorTaskKind) -> Self {
        Self {
            task_index,
            task,
            score: None,
            dbs: None,
            side_effect: None,
            set_point: false,
            sample_start: None,
            sample_end: None,
            wall_time_ms: None,
        }
    }

    pub fn is_closed(&self) -> bool {
        self.sample_end.is_some()
    }

    pub fn sample_range(&self) -> Option<Range<u64>> {
        Some(self.sample_start?..self.sample_end?)
    }
}

impl fmt::Display for AnnotationEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_event(self))
    }
}

/// Renders the event-list string for an event.
pub fn format_event(e: &AnnotationEvent) -> String {
    let mut s = format!("{}-{}", e.task_index, e.task.label());
    if let Some(score) = e.score {
        s.push_str(&format!("/S{}", score.value()));
    }
    if let Some(dbs) = e.dbs {
        s.push('/');
        s.push_str(&dbs.to_string());
    }
    if let Some(se) = e.side_effect {
        s.push_str(&format!("/SE{}", se.option()));
    }
    if e.set_point {
        s.push_str("/SP");
    }
    s
}

/// What went wrong while parsing an event string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventSyntax {
    Index,
    Task,
    Score,
    Dbs,
    SideEffect,
    TrailingInput,
}

impl fmt::Display for EventSyntax {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventSyntax::Index => "malformed task index",
            EventSyntax::Task => "unknown task label",
            EventSyntax::Score => "invalid score",
            EventSyntax::Dbs => "invalid DBS settings",
            EventSyntax::SideEffect => "invalid side effect option",
            EventSyntax::TrailingInput => "unexpected trailing input",
        })
    }
}

struct Cursor<'a> {
    s: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.s[self.pos..]
    }

    fn eat(&mut self, lit: &str) -> bool {
        if self.rest().starts_with(lit) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    /// Canonical unsigned integer: no sign, no leading zeros.
    fn uint(&mut self) -> Option<u64> {
        let digits = self.rest().bytes().take_while(u8::is_ascii_digit).count();
        if digits == 0 || digits > 9 {
            return None;
        }
        let text = &self.rest()[..digits];
        if digits > 1 && text.starts_with('0') {
            return None;
        }
        self.pos += digits;
        text.parse().ok()
    }

    /// `[0-9]+ "." [0-9]` as tenths.
    fn decimal_tenths(&mut self) -> Option<u64> {
        let whole = self.uint()?;
        if !self.eat(".") {
            return None;
        }
        let frac = self.rest().bytes().next().filter(u8::is_ascii_digit)?;
        self.pos += 1;
        Some(whole * 10 + (frac - b'0') as u64)
    }
}

/// Parses an event string with the built-in task catalog.
pub fn parse_event(s: &str) -> Result<AnnotationEvent, SessionError> {
    parse_event_with(s, &TaskCatalog::new())
}

/// Parses an event string, resolving task labels through `catalog`.
/// Errors carry the byte offset of the offending field.
pub fn parse_event_with(s: &str, catalog: &TaskCatalog) -> Result<AnnotationEvent, SessionError> {
    let mut c = Cursor { s, pos: 0 };
    let err = |kind: EventSyntax, offset: usize| SessionError::Parse { kind, offset };

    let index = c
        .uint()
        .filter(|&i| i >= 1 && i <= u32::MAX as u64)
        .ok_or_else(|| err(EventSyntax::Index, 0))? as u32;
    if !c.eat("-") {
        return Err(err(EventSyntax::Index, c.pos));
    }

    let task_at = c.pos;
    let label_len = c.rest().find('/').unwrap_or(c.rest().len());
    let label = &c.rest()[..label_len];
    let task = catalog
        .lookup(label)
        .ok_or_else(|| err(EventSyntax::Task, task_at))?;
    c.pos += label_len;
    let mut event = AnnotationEvent::new(index, task);

    // "/SE" must be tried before "/S" so the score branch does not swallow it.
    if !c.rest().starts_with("/SE") && !c.rest().starts_with("/SP") && c.rest().starts_with("/S") {
        let at = c.pos + 2;
        c.pos += 2;
        let score = c
            .uint()
            .filter(|&v| v <= RatingScore::MAX as u64)
            .ok_or_else(|| err(EventSyntax::Score, at))?;
        event.score = Some(RatingScore(score as u8));
    }

    if c.rest().starts_with("/DBS-") {
        let at = c.pos + 1;
        c.pos += 5;
        event.dbs = Some(parse_dbs(&mut c).ok_or_else(|| err(EventSyntax::Dbs, at))?);
    }

    if c.rest().starts_with("/SE") {
        let at = c.pos + 3;
        c.pos += 3;
        let option = c
            .uint()
            .and_then(|v| u8::try_from(v).ok())
            .and_then(SideEffect::from_option)
            .ok_or_else(|| err(EventSyntax::SideEffect, at))?;
        event.side_effect = Some(option);
    }

    if c.eat("/SP") {
        event.set_point = true;
    }

    if !c.rest().is_empty() {
        return Err(err(EventSyntax::TrailingInput, c.pos));
    }
    Ok(event)
}

fn parse_dbs(c: &mut Cursor<'_>) -> Option<DbsParams> {
    let tenths = c.decimal_tenths()?;
    let unit = if c.eat("mA") {
        AmplitudeUnit::MilliAmp
    } else if c.eat("V") {
        AmplitudeUnit::Volt
    } else {
        return None;
    };
    if !c.eat("-") {
        return None;
    }
    let freq = c.uint()?;
    if !c.eat("Hz-") {
        return None;
    }
    let pw = c.uint()?;
    if !c.eat("us") {
        return None;
    }
    let params = DbsParams {
        amplitude: Amplitude {
            tenths: u16::try_from(tenths).ok()?,
            unit,
        },
        frequency_hz: u16::try_from(freq).ok()?,
        pulse_width_us: u16::try_from(pw).ok()?,
    };
    params.validate().ok()?;
    Some(params)
}

// ---------------------------------------------------------------------------
// Session metadata and event list
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Procedure {
    pub medication_on: bool,
    pub medication_off: bool,
    pub dbs_programming: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DbsDevice {
    pub pulse_generator: String,
    pub electrodes: String,
    pub initial: DbsParams,
}

/// Session header collected before recording starts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub pseudo_id: String,
    pub disease: String,
    pub sensor_placement: String,
    pub procedure: Procedure,
    pub dbs_device: Option<DbsDevice>,
}

impl SessionMeta {
    pub fn new(pseudo_id: &str) -> Self {
        Self {
            pseudo_id: pseudo_id.to_string(),
            disease: String::new(),
            sensor_placement: "right forearm".to_string(),
            procedure: Procedure::default(),
            dbs_device: None,
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        if self.pseudo_id.trim().is_empty() {
            return Err(SessionError::InvalidMeta("pseudo id is empty".into()));
        }
        if self.procedure.dbs_programming && self.dbs_device.is_none() {
            return Err(SessionError::InvalidMeta(
                "DBS programming requires a DBS device".into(),
            ));
        }
        if let Some(dev) = &self.dbs_device {
            dev.initial.validate()?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("session metadata serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SessionError> {
        let meta: SessionMeta =
            serde_json::from_str(text).map_err(|e| SessionError::InvalidMeta(e.to_string()))?;
        meta.validate()?;
        Ok(meta)
    }
}

/// Ordered event list for one session. Indices run 1..=n without gaps and at
/// most one task (the last) is open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub meta: SessionMeta,
    pub catalog: TaskCatalog,
    events: Vec<AnnotationEvent>,
}

impl Session {
    pub fn new(meta: SessionMeta) -> Result<Self, SessionError> {
        meta.validate()?;
        Ok(Self {
            meta,
            catalog: TaskCatalog::new(),
            events: Vec::new(),
        })
    }

    pub fn events(&self) -> &[AnnotationEvent] {
        &self.events
    }

    pub fn closed_events(&self) -> impl Iterator<Item = &AnnotationEvent> {
        self.events.iter().filter(|e| e.is_closed())
    }

    pub fn next_index(&self) -> u32 {
        self.events.last().map_or(1, |e| e.task_index + 1)
    }

    pub fn open_task(&self) -> Option<&AnnotationEvent> {
        self.events.last().filter(|e| !e.is_closed())
    }

    fn open_task_mut(&mut self) -> Result<&mut AnnotationEvent, SessionError> {
        match self.events.last_mut() {
            Some(e) if !e.is_closed() => Ok(e),
            _ => Err(SessionError::NoActiveTask),
        }
    }

    /// Records an event. A new index (last + 1) appends the event; the index
    /// of the open task merges the event's score, DBS settings, side effect,
    /// set-point marker and closing sample into it.
    pub fn record_annotation(&mut self, e: AnnotationEvent) -> Result<(), SessionError> {
        if let Some(range) = e.sample_range() {
            if range.start >= range.end {
                return Err(SessionError::EmptySpan {
                    start: range.start,
                    end: range.end,
                });
            }
        }
        if e.task_index == self.next_index() {
            if self.open_task().is_some() {
                return Err(SessionError::TaskStillOpen(self.next_index() - 1));
            }
            if e.sample_end.is_some() && e.sample_start.is_none() {
                return Err(SessionError::EmptySpan { start: 0, end: 0 });
            }
            self.events.push(e);
            return Ok(());
        }
        if self.events.iter().any(|x| x.task_index == e.task_index) {
            let open = self.open_task_mut();
            return match open {
                Ok(open) if open.task_index == e.task_index => {
                    if open.task != e.task {
                        return Err(SessionError::DuplicateIndex(e.task_index));
                    }
                    if e.score.is_some() {
                        open.score = e.score;
                    }
                    if e.dbs.is_some() {
                        open.dbs = e.dbs;
                    }
                    if e.side_effect.is_some() {
                        open.side_effect = e.side_effect;
                    }
                    open.set_point |= e.set_point;
                    if let Some(end) = e.sample_end {
                        let start = open.sample_start.unwrap_or(0);
                        if end <= start {
                            return Err(SessionError::EmptySpan { start, end });
                        }
                        open.sample_end = Some(end);
                    }
                    Ok(())
                }
                _ => Err(SessionError::DuplicateIndex(e.task_index)),
            };
        }
        Err(SessionError::IndexGap {
            expected: self.next_index(),
            got: e.task_index,
        })
    }

    pub fn start_task(
        &mut self,
        task: MotorTaskKind,
        sample: u64,
        wall_time_ms: Option<u64>,
    ) -> Result<u32, SessionError> {
        if let MotorTaskKind::Custom(label) = &task {
            if self.catalog.lookup(label).is_none() {
                return Err(SessionError::InvalidTaskLabel(label.clone()));
            }
        }
        let mut e = AnnotationEvent::new(self.next_index(), task);
        e.sample_start = Some(sample);
        e.wall_time_ms = wall_time_ms;
        let index = e.task_index;
        self.record_annotation(e)?;
        Ok(index)
    }

    pub fn stop_task(&mut self, sample: u64) -> Result<&AnnotationEvent, SessionError> {
        let open = self.open_task_mut()?;
        let start = open.sample_start.unwrap_or(0);
        if sample <= start {
            return Err(SessionError::EmptySpan { start, end: sample });
        }
        open.sample_end = Some(sample);
        Ok(self.events.last().unwrap())
    }

    /// Scores the open task. A score may be changed while the task is open.
    pub fn score(&mut self, score: RatingScore) -> Result<&AnnotationEvent, SessionError> {
        self.open_task_mut()?.score = Some(score);
        Ok(self.events.last().unwrap())
    }

    pub fn set_dbs(&mut self, dbs: DbsParams) -> Result<&AnnotationEvent, SessionError> {
        dbs.validate()?;
        self.open_task_mut()?.dbs = Some(dbs);
        Ok(self.events.last().unwrap())
    }

    pub fn side_effect(&mut self, se: SideEffect) -> Result<&AnnotationEvent, SessionError> {
        self.open_task_mut()?.side_effect = Some(se);
        Ok(self.events.last().unwrap())
    }

    pub fn set_point(&mut self) -> Result<&AnnotationEvent, SessionError> {
        self.open_task_mut()?.set_point = true;
        Ok(self.events.last().unwrap())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("{kind} at byte {offset}")]
    Parse { kind: EventSyntax, offset: usize },
    #[error("score {0} outside 0-4")]
    ScoreOutOfRange(u32),
    #[error("{field} value {value} outside the legal range")]
    DbsOutOfRange { field: DbsField, value: f64 },
    #[error("step {step} is not a permitted {field} increment")]
    IllegalStep { field: DbsField, step: f64 },
    #[error("invalid task label {0:?}")]
    InvalidTaskLabel(String),
    #[error("task label {0:?} already registered")]
    DuplicateTaskLabel(String),
    #[error("no active motor task")]
    NoActiveTask,
    #[error("task {0} is still open")]
    TaskStillOpen(u32),
    #[error("duplicate task index {0}")]
    DuplicateIndex(u32),
    #[error("expected task index {expected}, got {got}")]
    IndexGap { expected: u32, got: u32 },
    #[error("task span [{start}, {end}) is empty")]
    EmptySpan { start: u64, end: u64 },
    #[error("invalid session metadata: {0}")]
    InvalidMeta(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fn_event() -> AnnotationEvent {
        let mut e = AnnotationEvent::new(5, MotorTaskKind::FingerToNose);
        e.score = Some(RatingScore::new(3).unwrap());
        e.dbs = Some(DbsParams::new(3.5, AmplitudeUnit::Volt, 130, 60).unwrap());
        e.side_effect = Some(SideEffect::SpeechImpairment);
        e
    }

    #[test]
    fn formats_event_list_example() {
        assert_eq!(format_event(&fn_event()), "5-FN/S3/DBS-3.5V-130Hz-60us/SE6");
        let pp = AnnotationEvent::new(1, MotorTaskKind::Posture);
        assert_eq!(format_event(&pp), "1-PP");
    }

    #[test]
    fn parses_event_list_example() {
        assert_eq!(parse_event("5-FN/S3/DBS-3.5V-130Hz-60us/SE6").unwrap(), fn_event());
        let pp = parse_event("1-PP").unwrap();
        assert_eq!(pp, AnnotationEvent::new(1, MotorTaskKind::Posture));
        assert!(!pp.set_point);
    }

    #[test]
    fn parse_errors_name_the_field_and_offset() {
        assert_eq!(
            parse_event("2-RP/S9"),
            Err(SessionError::Parse { kind: EventSyntax::Score, offset: 6 })
        );
        let cases = [
            ("0-RP", EventSyntax::Index, 0),
            ("01-RP", EventSyntax::Index, 0),
            ("x-RP", EventSyntax::Index, 0),
            ("3RP", EventSyntax::Index, 1),
            ("3-XX", EventSyntax::Task, 2),
            ("3-RP/DBS-30.1V-130Hz-60us", EventSyntax::Dbs, 5),
            ("3-RP/DBS-3.5V-1Hz-60us", EventSyntax::Dbs, 5),
            ("3-RP/DBS-3.5V-130Hz-65us", EventSyntax::Dbs, 5),
            ("3-RP/DBS-3.5A-130Hz-60us", EventSyntax::Dbs, 5),
            ("3-RP/DBS-3V-130Hz-60us", EventSyntax::Dbs, 5),
            ("3-RP/SE9", EventSyntax::SideEffect, 7),
            ("3-RP/SE0", EventSyntax::SideEffect, 7),
            ("3-RP/SP/S1", EventSyntax::TrailingInput, 7),
        ];
        for (s, kind, offset) in cases {
            assert_eq!(parse_event(s), Err(SessionError::Parse { kind, offset }), "{s}");
        }
    }

    #[test]
    fn milliamp_and_set_point_round_trip() {
        let s = "12-HM/DBS-20.0mA-255Hz-450us/SE1/SP";
        let e = parse_event(s).unwrap();
        assert_eq!(e.dbs.unwrap().amplitude.unit, AmplitudeUnit::MilliAmp);
        assert_eq!(e.side_effect, Some(SideEffect::None));
        assert!(e.set_point);
        assert_eq!(format_event(&e), s);
    }

    #[test]
    fn custom_tasks_need_registration() {
        let mut cat = TaskCatalog::new();
        assert!(parse_event_with("1-TAP", &cat).is_err());
        cat.register("TAP").unwrap();
        assert_eq!(
            parse_event_with("1-TAP/S2", &cat).unwrap().task,
            MotorTaskKind::Custom("TAP".into())
        );
        assert!(matches!(cat.register("TAP"), Err(SessionError::DuplicateTaskLabel(_))));
        assert!(matches!(cat.register("FN"), Err(SessionError::DuplicateTaskLabel(_))));
        assert!(matches!(cat.register(""), Err(SessionError::InvalidTaskLabel(_))));
        assert!(matches!(cat.register("A/B"), Err(SessionError::InvalidTaskLabel(_))));
    }

    #[test]
    fn dbs_steps() {
        let p = DbsParams::new(3.0, AmplitudeUnit::MilliAmp, 130, 60).unwrap();
        let q = apply_dbs_step(p, DbsField::Amplitude, 0.5).unwrap();
        assert_eq!(q.amplitude.tenths, 35);
        assert_eq!(q.frequency_hz, 130);
        assert!(matches!(
            apply_dbs_step(p, DbsField::Frequency, 0.0),
            Err(SessionError::IllegalStep { .. })
        ));
        assert!(apply_dbs_step(p, DbsField::Frequency, 3.0).is_err());
        assert!(apply_dbs_step(p, DbsField::PulseWidth, 5.0).is_err());
        assert!(apply_dbs_step(p, DbsField::Amplitude, 0.2).is_err());
        assert_eq!(apply_dbs_step(p, DbsField::Frequency, 10.0).unwrap().frequency_hz, 140);
        assert_eq!(apply_dbs_step(p, DbsField::PulseWidth, -10.0).unwrap().pulse_width_us, 50);

        let high = DbsParams::new(19.9, AmplitudeUnit::MilliAmp, 130, 60).unwrap();
        assert_eq!(apply_dbs_step(high, DbsField::Amplitude, 0.5).unwrap().amplitude.tenths, 200);
    }

    #[test]
    fn amplitude_clamp_sweep_over_grid() {
        // Every grid point, every permitted step: result is the clamped sum.
        for tenths in Amplitude::MIN_TENTHS..=Amplitude::MAX_TENTHS {
            let p = DbsParams {
                amplitude: Amplitude { tenths, unit: AmplitudeUnit::Volt },
                ..DbsParams::default()
            };
            for step in [-5i32, -1, 1, 5] {
                let q = apply_dbs_step(p, DbsField::Amplitude, step as f64 / 10.0).unwrap();
                let expected = (tenths as i32 + step).clamp(1, 200) as u16;
                assert_eq!(q.amplitude.tenths, expected);
                assert_eq!(q.amplitude.unit, AmplitudeUnit::Volt);
            }
        }
    }

    #[test]
    fn session_ordering_rules() {
        let mut s = Session::new(SessionMeta::new("S02")).unwrap();
        assert_eq!(
            s.score(RatingScore::new(1).unwrap()).unwrap_err().to_string(),
            "no active motor task"
        );
        for (i, kind) in MotorTaskKind::BUILTIN.iter().enumerate() {
            let idx = s.start_task(kind.clone(), i as u64 * 100, None).unwrap();
            assert_eq!(idx, i as u32 + 1);
            s.stop_task(i as u64 * 100 + 50).unwrap();
        }
        let idx: Vec<u32> = s.events().iter().map(|e| e.task_index).collect();
        assert_eq!(idx, vec![1, 2, 3, 4]);

        assert_eq!(
            s.record_annotation(AnnotationEvent::new(2, MotorTaskKind::Posture)),
            Err(SessionError::DuplicateIndex(2))
        );
        assert_eq!(
            s.record_annotation(AnnotationEvent::new(7, MotorTaskKind::Posture)),
            Err(SessionError::IndexGap { expected: 5, got: 7 })
        );
    }

    #[test]
    fn attaching_to_open_task_merges() {
        let mut s = Session::new(SessionMeta::new("S01")).unwrap();
        s.start_task(MotorTaskKind::FingerToNose, 10, None).unwrap();
        s.score(RatingScore::new(2).unwrap()).unwrap();
        s.score(RatingScore::new(3).unwrap()).unwrap();
        let mut patch = AnnotationEvent::new(1, MotorTaskKind::FingerToNose);
        patch.side_effect = Some(SideEffect::Headache);
        s.record_annotation(patch).unwrap();
        s.stop_task(20).unwrap();
        let e = &s.events()[0];
        assert_eq!(e.score.unwrap().value(), 3);
        assert_eq!(e.side_effect, Some(SideEffect::Headache));
        assert_eq!(e.sample_range(), Some(10..20));
        // closed tasks cannot be re-scored
        assert_eq!(s.score(RatingScore::new(1).unwrap()), Err(SessionError::NoActiveTask));
    }

    #[test]
    fn empty_span_rejected() {
        let mut s = Session::new(SessionMeta::new("S01")).unwrap();
        s.start_task(MotorTaskKind::Rest, 10, None).unwrap();
        assert!(matches!(s.stop_task(10), Err(SessionError::EmptySpan { .. })));
        assert!(matches!(
            s.start_task(MotorTaskKind::Rest, 11, None),
            Err(SessionError::TaskStillOpen(1))
        ));
    }

    #[test]
    fn meta_validation_and_json() {
        let mut meta = SessionMeta::new("P-17");
        meta.procedure.dbs_programming = true;
        assert!(meta.validate().is_err());
        meta.dbs_device = Some(DbsDevice {
            pulse_generator: "IPG".into(),
            electrodes: "quadripolar".into(),
            initial: DbsParams::default(),
        });
        let json = meta.to_json();
        assert!(json.contains("\"pseudo_id\":\"P-17\""));
        assert_eq!(SessionMeta::from_json(&json).unwrap(), meta);
        assert!(SessionMeta::from_json(r#"{"pseudo_id":"","disease":"","sensor_placement":"","procedure":{"medication_on":false,"medication_off":false,"dbs_programming":false},"dbs_device":null}"#).is_err());
    }

    #[test]
    fn side_effect_codes() {
        assert_eq!(SideEffect::SpeechImpairment.option(), 6);
        assert_eq!(SideEffect::SpeechImpairment.code(), 5);
        assert_eq!(SideEffect::from_code(0), Some(SideEffect::None));
        assert_eq!(SideEffect::from_code(8), None);
        assert_eq!(SideEffect::from_option(0), None);
    }
}
