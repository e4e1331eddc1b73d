mod common;

use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tremor_core::imu::SensorConfig;
use tremor_core::session::MotorTaskKind;
use tremor_core::sim::TaskScenario;
use tremor_engine::engine::{Engine, EngineConfig, EngineHandle};
use tremor_engine::log::{read_log_bytes, LogError, LogRecord, LogSink, LogWriter, SharedBuffer, ThreadedLog};
use tremor_engine::replay::{replay_bytes, replay_entries, replay_log};
use tremor_engine::source::{spawn_paced, ScenarioCycle};

use common::{random_command, random_session};

#[test]
fn hundred_random_sessions_replay_identically() {
    for seed in 0..100 {
        let live = random_session(seed);
        let r = replay_bytes(&live.log).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert_eq!(r.frames, live.frames, "seed {seed}");
        assert_eq!(r.report(), live.report, "seed {seed}");
        assert_eq!(r.event_strings(), live.events, "seed {seed}");
        assert_eq!(r.state, live.state, "seed {seed}");
        assert_eq!(r.commands.len(), live.commands, "seed {seed}");
    }
}

#[test]
fn replay_from_file() {
    let live = random_session(4242);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.trlog");
    std::fs::write(&path, &live.log).unwrap();
    let r = replay_log(&path).unwrap();
    assert_eq!(r.report(), live.report);
    assert!(matches!(replay_log(&dir.path().join("missing")), Err(LogError::Io(_))));
}

#[test]
fn tampered_ack_is_detected() {
    let live = random_session(77);
    let mut entries = read_log_bytes(&live.log).unwrap();
    let cmd = entries
        .iter_mut()
        .find_map(|e| match &mut e.record {
            LogRecord::Command(c) => Some(c),
            _ => None,
        })
        .unwrap();
    cmd.ack.ok = !cmd.ack.ok;
    assert!(matches!(replay_entries(entries), Err(LogError::Divergence { .. })));

    // Re-encoding the untouched entries reproduces the log byte for byte.
    let entries = read_log_bytes(&live.log).unwrap();
    let buf = SharedBuffer::default();
    let mut w = LogWriter::new(buf.clone()).unwrap();
    for e in entries {
        w.append(e.record).unwrap();
    }
    assert_eq!(buf.bytes(), live.log);
}

#[test]
fn ten_thousand_command_fuzz_keeps_replay_equivalence() {
    let sensor = SensorConfig::default();
    let buf = SharedBuffer::default();
    let log = ThreadedLog::spawn(LogWriter::new(buf.clone()).unwrap());
    let handle = EngineHandle::spawn(Engine::new(EngineConfig::default(), Box::new(log)).unwrap());
    let client = handle.client();
    let _display = client.subscribe_with(4).unwrap();

    let scenarios = MotorTaskKind::BUILTIN.iter().map(|k| TaskScenario::default_for(k, 9)).collect();
    let frames = ScenarioCycle::new(scenarios, sensor.clone()).take(40_000);
    let src = spawn_paced(frames, 20_000.0, client.clone(), Arc::new(AtomicBool::new(false)), false);

    let (done_tx, done_rx) = crossbeam_channel::unbounded();
    let workers: Vec<_> = (0..4)
        .map(|w| {
            let client = client.clone();
            let done = done_tx.clone();
            std::thread::spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + w);
                let mut ok = 0;
                for _ in 0..2500 {
                    if client.command(random_command(&mut rng)).unwrap().ok {
                        ok += 1;
                    }
                    if rng.random_bool(0.01) {
                        std::thread::yield_now();
                    }
                }
                done.send(ok).unwrap();
            })
        })
        .collect();
    let mut accepted = 0;
    for _ in 0..4 {
        accepted += done_rx.recv_timeout(Duration::from_secs(120)).expect("fuzz workers finished (no deadlock)");
    }
    for w in workers {
        w.join().unwrap();
    }
    src.join().unwrap();
    let (live_state, live_next) = client.status().unwrap();
    let live_report = client.report().unwrap();
    let summary = handle.shutdown().unwrap();
    assert!(accepted > 1000, "only {accepted} commands accepted");

    let r = replay_bytes(&buf.bytes()).unwrap();
    assert_eq!(r.commands.len(), 10_000);
    assert_eq!(r.state, live_state);
    assert_eq!(r.frames.len() as u64, summary.frames);
    assert_eq!(r.frames.last().map(|f| f.t as u64 + 1), Some(live_next));
    assert_eq!(r.report(), live_report);
    assert_eq!(r.event_strings(), summary.events);
}
