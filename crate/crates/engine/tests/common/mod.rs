//! Randomized session generator shared by the replay suites.
#![allow(dead_code)]

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tremor_core::dsp::filter::FilterSpec;
use tremor_core::imu::SensorConfig;
use tremor_core::session::{AmplitudeUnit, DbsField, DbsParams, MotorTaskKind, SessionMeta};
use tremor_core::sim::TaskScenario;
use tremor_core::wire::Frame;
use tremor_engine::command::{Command, CommandState};
use tremor_engine::engine::{Engine, EngineConfig};
use tremor_engine::log::{LogWriter, SharedBuffer};
use tremor_engine::report::PreAnalysisReport;
use tremor_engine::source::simulate_frames;
use tremor_engine::view::ViewTransform;

pub fn random_view(rng: &mut impl Rng) -> ViewTransform {
    match rng.random_range(0..8) {
        0 => ViewTransform::Raw,
        1 => ViewTransform::chebyshev_bandpass(),
        2 => ViewTransform::Filtered {
            filter: FilterSpec::feature_bandpass(),
        },
        3 => ViewTransform::Norm,
        4 => ViewTransform::Envelope,
        5 => ViewTransform::Pca {
            window: rng.random_range(1..300),
        },
        6 => ViewTransform::ShortTermPower {
            window: rng.random_range(0..100),
        },
        _ => ViewTransform::Filtered {
            filter: FilterSpec::chebyshev(rng.random_range(0..4), tremor_core::dsp::filter::FilterResponse::Lowpass(rng.random_range(1.0..120.0))),
        },
    }
}

/// Any command, valid or not, with arguments drawn to hit both sides of
/// every validation rule.
pub fn random_command(rng: &mut impl Rng) -> Command {
    const LABELS: [&str; 7] = ["RP", "PP", "FN", "HM", "SPIRAL", "XX", "rp"];
    match rng.random_range(0..12) {
        0 | 1 => Command::StartTask {
            task: LABELS[rng.random_range(0..LABELS.len())].into(),
        },
        2 | 3 => Command::StopTask,
        4 => Command::Score {
            value: rng.random_range(0..6),
        },
        5 => Command::DbsStep {
            field: [DbsField::Amplitude, DbsField::Frequency, DbsField::PulseWidth][rng.random_range(0..3)],
            step: [0.1, -0.1, 0.5, -0.5, 1.0, 5.0, 10.0, -10.0, 0.3, 100.0][rng.random_range(0..10)],
        },
        6 => Command::DbsSet {
            params: if rng.random_bool(0.5) {
                None
            } else {
                DbsParams::new(
                    rng.random_range(0..60) as f64 / 10.0,
                    if rng.random_bool(0.5) { AmplitudeUnit::Volt } else { AmplitudeUnit::MilliAmp },
                    rng.random_range(0..300),
                    rng.random_range(0..500),
                )
                .ok()
            },
        },
        7 => Command::SideEffect {
            option: rng.random_range(0..10),
        },
        8 => Command::SetPoint,
        9 => Command::SetView { view: random_view(rng) },
        10 => Command::RegisterTask {
            label: ["SPIRAL", "RP", "", "TAP"][rng.random_range(0..4)].into(),
        },
        _ => Command::Status,
    }
}

pub struct LiveSession {
    pub log: Vec<u8>,
    pub frames: Vec<Frame>,
    pub report: PreAnalysisReport,
    pub events: Vec<String>,
    pub state: CommandState,
    pub commands: usize,
}

/// Simulates a few tasks, annotates them, sprinkles random commands and
/// dropped frames, and runs it all through a live engine.
pub fn random_session(seed: u64) -> LiveSession {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sensor = SensorConfig::default();
    let n_tasks = rng.random_range(1..=4);
    let scenarios: Vec<TaskScenario> = (0..n_tasks)
        .map(|_| {
            let kind = &MotorTaskKind::BUILTIN[rng.random_range(0..4)];
            let mut sc = TaskScenario::default_for(kind, rng.random());
            sc.duration_s = rng.random_range(1.0..4.0);
            if *kind == MotorTaskKind::FingerToNose {
                sc.duration_s += 3.5; // room for three reaches
            }
            sc
        })
        .collect();
    let stream = simulate_frames(&scenarios, &sensor, rng.random_range(0..1000), rng.random()).unwrap();
    let cfg = EngineConfig {
        meta: SessionMeta::new(&format!("R{seed:04}")),
        view: random_view(&mut rng),
        chunk: rng.random_range(1..25),
        ..EngineConfig::default()
    };
    let cfg = if cfg.validate().is_ok() { cfg } else { EngineConfig { view: ViewTransform::Raw, ..cfg } };
    let buf = SharedBuffer::default();
    let mut engine = Engine::new(cfg, Box::new(LogWriter::new(buf.clone()).unwrap())).unwrap();
    let mut kept = Vec::new();
    let mut commands = 0;
    let mut frames = stream.frames.into_iter();
    for (task, start, end) in &stream.spans {
        engine.command(&Command::StartTask { task: task.label().into() }, None).unwrap();
        commands += 1;
        for f in frames.by_ref().take((end - start) as usize) {
            if rng.random_bool(0.01) {
                continue;
            }
            if rng.random_bool(0.02) {
                let wall = rng.random_bool(0.5).then(|| rng.random_range(0..u64::MAX / 2));
                engine.command(&random_command(&mut rng), wall).unwrap();
                commands += 1;
            }
            engine.process_frame(f, Instant::now()).unwrap();
            kept.push(f);
        }
        engine.command(&Command::StopTask, None).unwrap();
        commands += 1;
    }
    let report = engine.report();
    let state = engine.state().clone();
    let summary = engine.finish("random session").unwrap();
    LiveSession {
        log: buf.bytes(),
        frames: kept,
        report,
        events: summary.events,
        state,
        commands,
    }
}
