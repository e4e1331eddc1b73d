// `!(x > 0.0)` rejects NaN on purpose; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tremor_core::classify::{cross_validate, train, ModelSpec, TrainedModel};
use tremor_core::dsp::filter::FilterSpec;
use tremor_core::features::{build_dataset, Dataset, FeatureConfig, FeatureMode, SessionRecording};
use tremor_core::imu::SensorConfig;
use tremor_core::metrics::{confusion, MetricReport};
use tremor_core::session::{MotorTaskKind, SessionMeta};
use tremor_core::sim::{synthetic_corpus, CorpusConfig, TaskScenario};

use tremor_engine::bench::{bench_latency, bench_noise, bench_vibration};
use tremor_engine::command::Command;
use tremor_engine::engine::{Engine, EngineConfig, EngineHandle};
use tremor_engine::log::{LogWriter, ThreadedLog};
use tremor_engine::replay::replay_log;
use tremor_engine::source::{encode_stream, simulate_frames, spawn_paced, spawn_reader, ScenarioCycle};
use tremor_engine::view::ViewTransform;

#[derive(Parser)]
#[command(name = "tremor", version, about = "Tremor capture engine with a simulated 9-axis IMU")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a session, annotate each task and write the session log.
    Simulate(SimulateArgs),
    /// Run the live engine with the WebSocket API.
    Serve(ServeArgs),
    /// Replay a session log and print the per-task pre-analysis.
    Analyze(AnalyzeArgs),
    /// Train a motor-task classifier and save it as JSON.
    Train(TrainArgs),
    /// Cross-validate classifiers and print accuracy, confusion and metrics.
    Eval(EvalArgs),
    /// Static noise bench: RMS, peak-to-peak and PSD per axis.
    BenchNoise(BenchNoiseArgs),
    /// Vibration bench: sinusoidal excitation on the z axis.
    BenchVibration(BenchVibrationArgs),
    /// Engine processing and source-to-subscriber latency.
    BenchLatency(BenchLatencyArgs),
}

#[derive(Args)]
struct SensorArgs {
    /// Sensor configuration JSON (defaults: 200 SPS, ±2 g, 245 dps, ±4 gauss).
    #[arg(long, value_name = "FILE")]
    sensor: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Comma-separated task labels run back to back.
    #[arg(long, default_value = "RP,PP,FN,HM", conflicts_with = "scenario")]
    tasks: String,
    /// Scenario JSON file; repeat for several tasks.
    #[arg(long, value_name = "FILE")]
    scenario: Vec<PathBuf>,
    /// Seconds per task (ignored for scenario files).
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Session log to write.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Also write the raw frame byte stream.
    #[arg(long, value_name = "FILE")]
    raw: Option<PathBuf>,
    /// Comma-separated 0-4 score per task.
    #[arg(long)]
    scores: Option<String>,
    /// Session metadata JSON.
    #[arg(long, value_name = "FILE")]
    meta: Option<PathBuf>,
    /// View transform, see `serve --help`.
    #[arg(long, default_value = "raw")]
    view: String,
    #[command(flatten)]
    sensor: SensorArgs,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8765")]
    addr: SocketAddr,
    /// Session log to write.
    #[arg(long, value_name = "FILE")]
    log: PathBuf,
    /// Raw frame byte stream to play instead of the simulator.
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Stop after this many seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Session metadata JSON.
    #[arg(long, value_name = "FILE")]
    meta: Option<PathBuf>,
    /// raw, norm, envelope, chebyshev, butterworth, pca[:window] or
    /// stp[:window]; a JSON object is also accepted.
    #[arg(long, default_value = "raw")]
    view: String,
    #[command(flatten)]
    sensor: SensorArgs,
}

#[derive(Args)]
struct AnalyzeArgs {
    log: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct DataArgs {
    /// Feature CSV written by `train --save-dataset`; default is the
    /// synthetic corpus.
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    subjects: usize,
    #[arg(long, default_value_t = 2021)]
    corpus_seed: u64,
    /// Seconds per task in the synthetic corpus.
    #[arg(long, default_value_t = 10.0)]
    task_duration: f64,
    /// stft or fft
    #[arg(long, default_value = "stft")]
    mode: String,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// dt, da, svm, knn1 or knn10
    #[arg(long, default_value = "svm")]
    model: String,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, value_name = "FILE")]
    save_dataset: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "dt,da,svm,knn1,knn10")]
    models: String,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Model whose pooled confusion and metrics are printed.
    #[arg(long, default_value = "svm")]
    detail: String,
    /// Score a saved model on the data instead of cross-validating.
    #[arg(long, value_name = "FILE")]
    model_file: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BenchNoiseArgs {
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    sensor: SensorArgs,
}

#[derive(Args)]
struct BenchVibrationArgs {
    #[arg(long, default_value_t = 10.0)]
    freq: f64,
    /// Peak-to-peak excitation in m/s².
    #[arg(long, default_value_t = 10.0)]
    pkpk: f64,
    #[arg(long, default_value_t = 30.0)]
    duration: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    sensor: SensorArgs,
}

#[derive(Args)]
struct BenchLatencyArgs {
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    /// Push frames as fast as the engine accepts them.
    #[arg(long)]
    unpaced: bool,
    #[arg(long, default_value = "chebyshev")]
    view: String,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    sensor: SensorArgs,
}

/// Bad flag values; exit code 1 like clap's own errors.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(UsageError(msg.into()).into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Cmd) -> anyhow::Result<()> {
    match cmd {
        Cmd::Simulate(a) => simulate(a),
        Cmd::Serve(a) => serve(a),
        Cmd::Analyze(a) => analyze(a),
        Cmd::Train(a) => train_cmd(a),
        Cmd::Eval(a) => eval_cmd(a),
        Cmd::BenchNoise(a) => {
            let cfg = sensor_config(&a.sensor)?;
            if a.samples < 2 {
                return usage("--samples must be at least 2");
            }
            let r = bench_noise(&cfg, a.samples, a.seed)?;
            print_out(a.json, &r, || r.to_text());
            Ok(())
        }
        Cmd::BenchVibration(a) => {
            let cfg = sensor_config(&a.sensor)?;
            if !(a.duration > 0.0 && a.freq > 0.0 && a.pkpk >= 0.0) {
                return usage("--duration and --freq must be positive, --pkpk non-negative");
            }
            let r = bench_vibration(&cfg, a.freq, a.pkpk, a.duration, a.seed)?;
            print_out(a.json, &r, || r.to_text());
            Ok(())
        }
        Cmd::BenchLatency(a) => {
            let cfg = sensor_config(&a.sensor)?;
            let view = parse_view(&a.view)?;
            if !(a.duration > 0.0) {
                return usage("--duration must be positive");
            }
            let r = bench_latency(&cfg, view, a.duration, !a.unpaced)?;
            print_out(a.json, &r, || r.to_text());
            Ok(())
        }
    }
}

fn print_out<T: serde::Serialize>(json: bool, value: &T, text: impl FnOnce() -> String) {
    if json {
        println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
    } else {
        print!("{}", text());
    }
}

fn sensor_config(a: &SensorArgs) -> anyhow::Result<SensorConfig> {
    let cfg = match &a.sensor {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => SensorConfig::default(),
    };
    cfg.validate().map_err(|e| anyhow!("sensor configuration: {e}"))?;
    Ok(cfg)
}

fn session_meta(path: Option<&Path>, fallback: &str) -> anyhow::Result<SessionMeta> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            SessionMeta::from_json(&text).map_err(|e| anyhow!("{}: {e}", p.display()))
        }
        None => Ok(SessionMeta::new(fallback)),
    }
}

fn parse_view(s: &str) -> anyhow::Result<ViewTransform> {
    if s.trim_start().starts_with('{') {
        return serde_json::from_str(s).or_else(|e| usage(format!("bad view JSON: {e}")));
    }
    let (name, arg) = match s.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (s, None),
    };
    let window = |default: usize| -> anyhow::Result<usize> {
        match arg {
            None => Ok(default),
            Some(a) => a.parse().or_else(|_| usage(format!("bad window '{a}'"))),
        }
    };
    Ok(match name {
        "raw" => ViewTransform::Raw,
        "norm" => ViewTransform::Norm,
        "envelope" => ViewTransform::Envelope,
        "chebyshev" | "filtered" => ViewTransform::chebyshev_bandpass(),
        "butterworth" => ViewTransform::Filtered {
            filter: FilterSpec::feature_bandpass(),
        },
        "pca" => ViewTransform::Pca { window: window(200)? },
        "stp" | "short_term_power" => ViewTransform::ShortTermPower { window: window(40)? },
        _ => return usage(format!("unknown view '{s}'")),
    })
}

fn simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let sensor = sensor_config(&a.sensor)?;
    let view = parse_view(&a.view)?;
    let scenarios: Vec<TaskScenario> = if a.scenario.is_empty() {
        if !(a.duration > 0.0) {
            return usage("--duration must be positive");
        }
        let mut out = Vec::new();
        for (i, label) in a.tasks.split(',').map(str::trim).enumerate() {
            let Some(kind) = MotorTaskKind::builtin(label) else {
                return usage(format!("unknown task '{label}', expected RP, PP, FN or HM"));
            };
            let mut sc = TaskScenario::default_for(&kind, a.seed.wrapping_add(i as u64));
            sc.duration_s = a.duration;
            out.push(sc);
        }
        out
    } else {
        let mut out = Vec::new();
        for p in &a.scenario {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let mut sc = TaskScenario::from_json(&text).map_err(|e| anyhow!("{}: {e}", p.display()))?;
            sc.seed = sc.seed.wrapping_add(a.seed);
            out.push(sc);
        }
        out
    };
    let scores: Vec<Option<u8>> = match &a.scores {
        None => vec![None; scenarios.len()],
        Some(s) => {
            let v: Result<Vec<u8>, _> = s.split(',').map(|x| x.trim().parse::<u8>()).collect();
            match v {
                Ok(v) if v.len() == scenarios.len() => v.into_iter().map(Some).collect(),
                _ => return usage(format!("--scores needs {} comma-separated values", scenarios.len())),
            }
        }
    };

    let stream = simulate_frames(&scenarios, &sensor, 0, 0)?;
    if let Some(raw) = &a.raw {
        fs::write(raw, encode_stream(&stream.frames)).with_context(|| format!("writing {}", raw.display()))?;
    }
    let cfg = EngineConfig {
        meta: session_meta(a.meta.as_deref(), "simulated")?,
        sensor,
        view,
        ..EngineConfig::default()
    };
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    let log = LogWriter::create(&a.out)?;
    let mut engine = Engine::new(cfg, Box::new(log))?;
    let mut frames = stream.frames.into_iter();
    for ((task, start, end), score) in stream.spans.iter().zip(scores) {
        if matches!(task, MotorTaskKind::Custom(_)) {
            engine.command(&Command::RegisterTask { label: task.label().to_string() }, None)?;
        }
        checked(engine.command(&Command::StartTask { task: task.label().to_string() }, None)?)?;
        for f in frames.by_ref().take((end - start) as usize) {
            engine.process_frame(f, Instant::now())?;
        }
        if let Some(v) = score {
            checked(engine.command(&Command::Score { value: v }, None)?)?;
        }
        checked(engine.command(&Command::StopTask, None)?)?;
    }
    let summary = engine.finish("simulation complete")?;
    println!("wrote {} ({} frames, {} saturated samples)", a.out.display(), summary.frames, stream.saturated);
    for e in &summary.events {
        println!("  {e}");
    }
    Ok(())
}

fn checked(ack: tremor_engine::Ack) -> anyhow::Result<()> {
    match ack.error {
        Some(e) if !ack.ok => usage(format!("{} rejected: {e}", ack.cmd)),
        _ => Ok(()),
    }
}

fn serve(a: ServeArgs) -> anyhow::Result<()> {
    let sensor = sensor_config(&a.sensor)?;
    let view = parse_view(&a.view)?;
    if matches!(a.duration, Some(d) if !(d > 0.0)) {
        return usage("--duration must be positive");
    }
    let input = match &a.input {
        Some(p) => Some(fs::File::open(p).with_context(|| format!("opening {}", p.display()))?),
        None => None,
    };
    let cfg = EngineConfig {
        meta: session_meta(a.meta.as_deref(), "live")?,
        sensor: sensor.clone(),
        view,
        ..EngineConfig::default()
    };
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    let log = ThreadedLog::spawn(LogWriter::create(&a.log)?);
    let handle = EngineHandle::spawn(Engine::new(cfg, Box::new(log))?);
    let client = handle.client();

    let stop = Arc::new(AtomicBool::new(false));
    let source = match input {
        Some(f) => spawn_reader(std::io::BufReader::new(f), client.clone(), true),
        None => {
            let scenarios = MotorTaskKind::BUILTIN
                .iter()
                .enumerate()
                .map(|(i, k)| TaskScenario::default_for(k, a.seed.wrapping_add(i as u64)))
                .collect();
            spawn_paced(ScenarioCycle::new(scenarios, sensor.clone()), sensor.fs, client.clone(), stop.clone(), true)
        }
    };

    let ended = Arc::new(tokio::sync::Notify::new());
    let (done_tx, done_rx) = crossbeam_channel::bounded(1);
    {
        let ended = ended.clone();
        std::thread::spawn(move || {
            let _ = done_tx.send(handle.wait());
            ended.notify_one();
        });
    }

    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let duration = a.duration;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(a.addr)
            .await
            .with_context(|| format!("binding {}", a.addr))?;
        println!("listening on ws://{}/ws, logging to {}", listener.local_addr()?, a.log.display());
        let _ = std::io::stdout().flush();
        let shutdown = async move {
            let timer = async {
                match duration {
                    Some(d) => tokio::time::sleep(Duration::from_secs_f64(d)).await,
                    None => std::future::pending().await,
                }
            };
            tokio::select! {
                _ = tokio::signal::ctrl_c() => {}
                _ = timer => {}
                _ = ended.notified() => {}
            }
        };
        tremor_engine::server::serve(listener, client.clone(), shutdown).await?;
        anyhow::Ok(())
    })?;
    rt.shutdown_timeout(Duration::from_secs(1));

    stop.store(true, Ordering::Relaxed);
    let _ = client.shutdown();
    let summary = done_rx.recv().map_err(|_| anyhow!("engine thread vanished"))??;
    let _ = source.join();
    println!(
        "session ended ({}): {} frames, {} gaps, processing mean {:.4} ms",
        summary.reason, summary.frames, summary.gaps, summary.latency.processing.mean_ms
    );
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> anyhow::Result<()> {
    let s = match replay_log(&a.log) {
        Ok(s) => s,
        Err(e) => return Err(anyhow!("{}: {e}", a.log.display())),
    };
    let report = s.report();
    if a.json {
        let v = json!({
            "meta": s.header.meta,
            "frames": s.frames.len(),
            "gaps": s.gaps,
            "stream_issues": s.stream_issues,
            "events": s.event_strings(),
            "configs": s.configs,
            "perf": s.perf,
            "end": s.end,
            "report": report,
        });
        println!("{}", serde_json::to_string_pretty(&v)?);
    } else {
        println!("session {}  frames {}  gaps {}", s.header.meta.pseudo_id, s.frames.len(), s.gaps.len());
        match &s.end {
            Some(e) => println!("closed: {}", e.reason),
            None => println!("closed: no (log ends without an end record)"),
        }
        for c in &s.configs {
            println!("view -> {} at sample {}", c.view.name(), c.sample);
        }
        println!("events:");
        for e in s.event_strings() {
            println!("  {e}");
        }
        print!("{}", report.to_text());
    }
    Ok(())
}

fn feature_mode(s: &str) -> anyhow::Result<FeatureMode> {
    match s {
        "stft" => Ok(FeatureMode::Stft),
        "fft" => Ok(FeatureMode::Fft),
        _ => usage(format!("unknown feature mode '{s}', expected stft or fft")),
    }
}

fn load_dataset(a: &DataArgs) -> anyhow::Result<Dataset> {
    let mode = feature_mode(&a.mode)?;
    if let Some(p) = &a.data {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        return Dataset::from_csv(&text).map_err(|e| anyhow!("{}: {e}", p.display()));
    }
    if a.subjects == 0 || !(a.task_duration > 0.0) {
        return usage("--subjects and --task-duration must be positive");
    }
    let corpus = CorpusConfig {
        subjects: a.subjects,
        task_duration_s: a.task_duration,
        seed: a.corpus_seed,
    };
    let sessions: Vec<SessionRecording> = synthetic_corpus(&SensorConfig::default(), &corpus)?
        .iter()
        .map(SessionRecording::from)
        .collect();
    let cfg = FeatureConfig {
        mode,
        ..FeatureConfig::default()
    };
    Ok(build_dataset(&sessions, &cfg)?)
}

fn model_spec(name: &str) -> anyhow::Result<ModelSpec> {
    match ModelSpec::by_name(name.trim()) {
        Some(s) => Ok(s),
        None => usage(format!("unknown model '{name}', expected dt, da, svm, knn1 or knn10")),
    }
}

fn train_cmd(a: TrainArgs) -> anyhow::Result<()> {
    let spec = model_spec(&a.model)?;
    let ds = load_dataset(&a.data)?;
    if let Some(p) = &a.save_dataset {
        fs::write(p, ds.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    let model = train(&spec, &ds)?;
    let hits = ds
        .x
        .iter()
        .zip(&ds.y)
        .filter(|(x, y)| model.predict(x).map(|p| p.class == **y).unwrap_or(false))
        .count();
    fs::write(&a.out, model.to_json()).with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "{} trained on {} rows x {} features; training accuracy {:.3}; saved to {}",
        spec.name(),
        ds.len(),
        ds.n_features(),
        hits as f64 / ds.len() as f64,
        a.out.display()
    );
    Ok(())
}

fn labels_of(ds: &Dataset) -> Vec<String> {
    ds.labels.iter().map(|l| l.label().to_string()).collect()
}

fn eval_cmd(a: EvalArgs) -> anyhow::Result<()> {
    let ds = load_dataset(&a.data)?;
    let labels = labels_of(&ds);

    if let Some(p) = &a.model_file {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let model = TrainedModel::from_json(&text).map_err(|e| anyhow!("{}: {e}", p.display()))?;
        model.check_layout(&ds)?;
        let preds = model.predict_all(&ds.x)?;
        let y_pred: Vec<usize> = preds.iter().map(|p| p.class).collect();
        let scores: Vec<Vec<f64>> = preds.into_iter().map(|p| p.scores).collect();
        let cm = confusion(&ds.y, &y_pred, &labels)?;
        let title = format!("{} on {} rows", model.spec.name(), ds.len());
        let report = MetricReport::new(&title, &cm, Some((&scores, &ds.y)))?;
        print_out(a.json, &report, || report.to_text());
        return Ok(());
    }

    if a.folds < 2 || a.folds > ds.len() {
        return usage(format!("--folds must be between 2 and {}", ds.len()));
    }
    let specs: Vec<ModelSpec> = a.models.split(',').map(model_spec).collect::<anyhow::Result<_>>()?;
    let detail = model_spec(&a.detail)?;
    let mut rows = Vec::new();
    let mut detail_report = None;
    for spec in &specs {
        let cv = cross_validate(spec, &ds, a.folds, a.seed)?;
        rows.push(json!({"model": spec.name(), "accuracy": cv.accuracy}));
        if spec.name() == detail.name() {
            let title = format!("{} pooled over {} folds", spec.name(), a.folds);
            detail_report = Some(MetricReport::new(&title, &cv.pooled, Some((&cv.scores, &ds.y)))?);
        }
    }
    if detail_report.is_none() {
        let cv = cross_validate(&detail, &ds, a.folds, a.seed)?;
        let title = format!("{} pooled over {} folds", detail.name(), a.folds);
        detail_report = Some(MetricReport::new(&title, &cv.pooled, Some((&cv.scores, &ds.y)))?);
    }
    let detail_report = detail_report.expect("computed above");
    if a.json {
        let v = json!({"rows": ds.len(), "folds": a.folds, "seed": a.seed, "accuracy": rows, "detail": detail_report});
        println!("{}", serde_json::to_string_pretty(&v)?);
    } else {
        println!("{} rows, {} classes, {}-fold stratified CV, seed {}", ds.len(), ds.n_classes(), a.folds, a.seed);
        println!("{:<8} accuracy", "model");
        for r in &rows {
            println!("{:<8} {:.3}", r["model"].as_str().unwrap_or(""), r["accuracy"].as_f64().unwrap_or(0.0));
        }
        println!();
        print!("{}", detail_report.to_text());
    }
    Ok(())
}
