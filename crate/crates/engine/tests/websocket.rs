use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio_tungstenite::tungstenite::Message;
use tremor_core::imu::SensorConfig;
use tremor_core::session::{MotorTaskKind, SessionMeta};
use tremor_core::sim::TaskScenario;
use tremor_engine::engine::{parse_view_batch, Engine, EngineConfig, EngineHandle};
use tremor_engine::latency::ACK_BUDGET_MS;
use tremor_engine::log::{LogWriter, SharedBuffer, ThreadedLog};
use tremor_engine::replay::replay_bytes;
use tremor_engine::server::serve;
use tremor_engine::source::{spawn_paced, ScenarioCycle};

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

struct Client {
    ws: Ws,
    binary: usize,
    last_first_sample: Option<u64>,
    events: Vec<Value>,
}

impl Client {
    async fn next_text(&mut self) -> Value {
        loop {
            let msg = tokio::time::timeout(Duration::from_secs(5), self.ws.next())
                .await
                .expect("message within 5 s")
                .expect("socket open")
                .expect("valid frame");
            match msg {
                Message::Text(t) => {
                    let v: Value = serde_json::from_str(t.as_str()).unwrap();
                    if v["type"] == "event" {
                        self.events.push(v);
                        continue;
                    }
                    return v;
                }
                Message::Binary(b) => {
                    let (_, first, n, w, vals) = parse_view_batch(&b).expect("well-formed view batch");
                    assert_eq!(vals.len(), n * w);
                    if let Some(prev) = self.last_first_sample {
                        assert!(first > prev, "batches arrive in order");
                    }
                    self.last_first_sample = Some(first);
                    self.binary += 1;
                }
                _ => {}
            }
        }
    }

    /// Sends one command and waits for the reply with the same id.
    async fn call(&mut self, id: u64, mut cmd: Value) -> (Value, f64) {
        cmd["id"] = json!(id);
        let t0 = Instant::now();
        self.ws.send(Message::Text(cmd.to_string().into())).await.unwrap();
        loop {
            let v = self.next_text().await;
            if v["id"] == json!(id) {
                return (v, t0.elapsed().as_secs_f64() * 1e3);
            }
        }
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn caption_flow_over_websocket() {
    let sensor = SensorConfig::default();
    let buf = SharedBuffer::default();
    let log = ThreadedLog::spawn(LogWriter::new(buf.clone()).unwrap());
    let cfg = EngineConfig {
        meta: SessionMeta::new("WS01"),
        ..EngineConfig::default()
    };
    let handle = EngineHandle::spawn(Engine::new(cfg, Box::new(log)).unwrap());
    let client = handle.client();
    let stop = Arc::new(AtomicBool::new(false));
    let scenarios = MotorTaskKind::BUILTIN.iter().map(|k| TaskScenario::default_for(k, 3)).collect();
    let source = spawn_paced(ScenarioCycle::new(scenarios, sensor.clone()), sensor.fs, client.clone(), stop.clone(), false);

    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve(listener, client.clone(), async {
        let _ = stop_rx.await;
    }));

    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    let mut c = Client {
        ws,
        binary: 0,
        last_first_sample: None,
        events: Vec::new(),
    };
    let hello = c.next_text().await;
    assert_eq!(hello["type"], "hello");
    assert_eq!(hello["fs"], 200.0);
    assert_eq!(hello["channels"].as_array().unwrap().len(), 9);

    let script = [
        json!({"cmd": "score", "value": 2}),
        json!({"cmd": "start_task", "task": "FN"}),
        json!({"cmd": "score", "value": 3}),
        json!({"cmd": "dbs_set", "params": {"amplitude": {"tenths": 30, "unit": "V"}, "frequency_hz": 130, "pulse_width_us": 60}}),
        json!({"cmd": "dbs_step", "field": "amplitude", "step": 0.5}),
        json!({"cmd": "dbs_set"}),
        json!({"cmd": "side_effect", "option": 6}),
        json!({"cmd": "set_view", "view": {"kind": "norm"}}),
        json!({"cmd": "stop_task"}),
    ];
    let mut worst = 0.0f64;
    let mut acks = Vec::new();
    for (i, cmd) in script.iter().enumerate() {
        tokio::time::sleep(Duration::from_millis(60)).await;
        let (ack, ms) = c.call(i as u64 + 1, cmd.clone()).await;
        worst = worst.max(ms);
        acks.push(ack);
    }
    assert_eq!(acks[0]["type"], "ack");
    assert_eq!(acks[0]["ok"], false);
    assert!(acks[1..].iter().all(|a| a["ok"] == true), "{acks:?}");
    assert_eq!(acks[4]["pending_dbs"]["amplitude"]["tenths"], 35);
    assert_eq!(acks[8]["event"], "1-FN/S3/DBS-3.5V-130Hz-60us/SE6");
    let samples: Vec<u64> = acks.iter().map(|a| a["sample"].as_u64().unwrap()).collect();
    assert!(samples.windows(2).all(|w| w[0] <= w[1]));
    assert!(worst < ACK_BUDGET_MS, "slowest ack {worst:.1} ms");

    let (bad, _) = c.call(99, json!({"cmd": "warp_drive"})).await;
    assert_eq!(bad["type"], "error");

    let (status, _) = c.call(100, json!({"cmd": "status"})).await;
    assert_eq!(status["events"], json!(["1-FN/S3/DBS-3.5V-130Hz-60us/SE6"]));

    // let a few more batches through after the view change
    tokio::time::sleep(Duration::from_millis(300)).await;
    let _ = c.call(101, json!({"cmd": "status"})).await;
    assert!(c.binary > 10, "{} view batches", c.binary);
    assert!(c.events.iter().any(|e| e["event"] == "view"));
    assert!(c.events.iter().any(|e| e["event"] == "task" && e["closed"] == true));

    let report: Value = reqwest_free_get(addr, "/report").await;
    assert_eq!(report["tasks"][0]["task"], "FN");

    stop.store(true, Ordering::Relaxed);
    source.join().unwrap();
    let _ = c.ws.close(None).await;
    let _ = stop_tx.send(());
    server.await.unwrap().unwrap();
    let summary = tokio::task::spawn_blocking(move || handle.shutdown()).await.unwrap().unwrap();

    let replay = replay_bytes(&buf.bytes()).unwrap();
    assert_eq!(replay.event_strings(), vec!["1-FN/S3/DBS-3.5V-130Hz-60us/SE6".to_string()]);
    assert_eq!(replay.frames.len() as u64, summary.frames);
    assert_eq!(replay.configs.len(), 1);
    assert_eq!(replay.commands.len(), 11);
}

/// Minimal HTTP/1.1 GET so the test needs no HTTP client crate.
async fn reqwest_free_get(addr: std::net::SocketAddr, path: &str) -> Value {
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    let mut s = tokio::net::TcpStream::connect(addr).await.unwrap();
    s.write_all(format!("GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").as_bytes())
        .await
        .unwrap();
    let mut out = Vec::new();
    s.read_to_end(&mut out).await.unwrap();
    let text = String::from_utf8(out).unwrap();
    let (head, body) = text.split_once("\r\n\r\n").unwrap();
    assert!(head.starts_with("HTTP/1.1 200"), "{head}");
    let body = if head.to_ascii_lowercase().contains("transfer-encoding: chunked") {
        dechunk(body)
    } else {
        body.to_string()
    };
    serde_json::from_str(&body).unwrap()
}

fn dechunk(mut body: &str) -> String {
    let mut out = String::new();
    loop {
        let (size, rest) = body.split_once("\r\n").unwrap();
        let n = usize::from_str_radix(size.trim(), 16).unwrap();
        if n == 0 {
            return out;
        }
        out.push_str(&rest[..n]);
        body = &rest[n + 2..];
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn socket_reports_engine_stop() {
    let handle = EngineHandle::spawn(
        Engine::new(EngineConfig::default(), Box::new(LogWriter::new(std::io::sink()).unwrap())).unwrap(),
    );
    let client = handle.client();
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let server = tokio::spawn(serve(listener, client.clone(), std::future::pending()));
    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    let mut c = Client {
        ws,
        binary: 0,
        last_first_sample: None,
        events: Vec::new(),
    };
    assert_eq!(c.next_text().await["type"], "hello");
    tokio::task::spawn_blocking(move || handle.shutdown()).await.unwrap().unwrap();
    let (reply, _) = c.call(1, json!({"cmd": "status"})).await;
    assert_eq!(reply["type"], "error");
    let deadline = Instant::now() + Duration::from_secs(5);
    while !c.events.iter().any(|e| e["event"] == "stopped") {
        assert!(Instant::now() < deadline, "no stopped event");
        match tokio::time::timeout(Duration::from_millis(200), c.ws.next()).await {
            Ok(Some(Ok(Message::Text(t)))) => c.events.push(serde_json::from_str(t.as_str()).unwrap()),
            Ok(Some(Ok(_))) | Err(_) => {}
            Ok(None) | Ok(Some(Err(_))) => panic!("socket closed before the stopped event"),
        }
    }
    server.abort();
}
