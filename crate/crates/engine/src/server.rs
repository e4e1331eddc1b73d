//! WebSocket subscriber and command API.
//!
//! `GET /ws` upgrades to a socket carrying JSON text messages (commands in,
//! hello/ack/event/error out) and binary view batches out. `GET /report`
//! returns the current pre-analysis report, `GET /health` returns `ok`.

use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::mpsc;

use crate::command::Command;
use crate::engine::{DisplaySink, EngineClient, SinkMessage};
use crate::queue::RecvTimeout;

#[derive(Clone)]
struct AppState {
    client: EngineClient,
}

#[derive(Debug, Deserialize)]
struct ClientMessage {
    #[serde(default)]
    id: Value,
    #[serde(flatten)]
    command: Command,
}

pub fn router(client: EngineClient) -> Router {
    Router::new()
        .route("/ws", get(ws_handler))
        .route("/report", get(report_handler))
        .route("/health", get(|| async { "ok" }))
        .with_state(Arc::new(AppState { client }))
}

/// Serves until `shutdown` resolves.
pub async fn serve<F>(listener: TcpListener, client: EngineClient, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(client)).with_graceful_shutdown(shutdown).await
}

async fn report_handler(State(st): State<Arc<AppState>>) -> Response {
    let client = st.client.clone();
    match tokio::task::spawn_blocking(move || client.report()).await {
        Ok(Ok(r)) => Json(r).into_response(),
        _ => (axum::http::StatusCode::SERVICE_UNAVAILABLE, "engine stopped").into_response(),
    }
}

async fn ws_handler(ws: WebSocketUpgrade, State(st): State<Arc<AppState>>) -> Response {
    ws.on_upgrade(move |socket| handle_socket(socket, st.client.clone()))
}

pub fn hello_message(client: &EngineClient) -> Option<Value> {
    let (state, sample) = client.status().ok()?;
    Some(json!({
        "type": "hello",
        "sample": sample,
        "fs": state.fs,
        "view": state.view,
        "channels": state.view.channel_names(),
        "events": state.event_strings(),
        "pending_dbs": state.pending_dbs,
        "meta": state.session.meta,
    }))
}

fn sink_to_message(m: SinkMessage) -> Message {
    match m {
        SinkMessage::View(b) => Message::Binary(b.to_bytes().into()),
        SinkMessage::Event(e) => {
            let mut v = serde_json::to_value(e).expect("events serialize");
            v["type"] = json!("event");
            Message::Text(v.to_string().into())
        }
    }
}

/// Moves display messages from the drop-oldest queue to the socket writer.
/// Runs on a blocking thread; a slow socket only makes the queue drop.
fn forward(sink: DisplaySink, out: mpsc::Sender<Message>) {
    loop {
        match sink.recv_timeout(Duration::from_millis(200)) {
            Ok(m) => {
                if out.blocking_send(sink_to_message(m)).is_err() {
                    sink.close();
                    return;
                }
            }
            Err(RecvTimeout::Timeout) => {
                if out.is_closed() {
                    sink.close();
                    return;
                }
            }
            Err(RecvTimeout::Closed) => return,
        }
    }
}

async fn handle_socket(socket: WebSocket, client: EngineClient) {
    let (mut ws_tx, mut ws_rx) = socket.split();
    let (display_tx, mut display_rx) = mpsc::channel::<Message>(8);
    let (reply_tx, mut reply_rx) = mpsc::unbounded_channel::<Message>();

    let setup = {
        let client = client.clone();
        tokio::task::spawn_blocking(move || {
            let sink = client.subscribe().ok()?;
            let hello = hello_message(&client)?;
            Some((sink, hello))
        })
        .await
    };
    let Ok(Some((sink, hello))) = setup else {
        let _ = ws_tx
            .send(Message::Text(json!({"type": "error", "id": null, "error": "engine stopped"}).to_string().into()))
            .await;
        return;
    };
    if ws_tx.send(Message::Text(hello.to_string().into())).await.is_err() {
        sink.close();
        return;
    }
    let fwd_sink = sink.clone();
    let forwarder = tokio::task::spawn_blocking(move || forward(fwd_sink, display_tx));

    let writer = tokio::spawn(async move {
        let mut display_open = true;
        loop {
            let msg = tokio::select! {
                biased;
                m = reply_rx.recv() => match m {
                    Some(m) => m,
                    None => break,
                },
                m = display_rx.recv(), if display_open => match m {
                    Some(m) => m,
                    None => {
                        display_open = false;
                        continue;
                    }
                },
            };
            if ws_tx.send(msg).await.is_err() {
                break;
            }
        }
        let _ = ws_tx.send(Message::Close(None)).await;
    });

    while let Some(Ok(msg)) = ws_rx.next().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        let parsed: Result<ClientMessage, _> = serde_json::from_str(text.as_str());
        match parsed {
            Ok(ClientMessage { id, command }) => {
                let tx = reply_tx.clone();
                let reply_id = id.clone();
                let sent = client.command_with(
                    command,
                    Box::new(move |res| {
                        let v = match res {
                            Ok(ack) => {
                                let mut v = serde_json::to_value(ack).expect("acks serialize");
                                v["type"] = json!("ack");
                                v["id"] = reply_id;
                                v
                            }
                            Err(e) => json!({"type": "error", "id": reply_id, "error": e}),
                        };
                        let _ = tx.send(Message::Text(v.to_string().into()));
                    }),
                );
                if sent.is_err() {
                    let _ = reply_tx.send(Message::Text(
                        json!({"type": "error", "id": id, "error": "engine stopped"}).to_string().into(),
                    ));
                }
            }
            Err(e) => {
                let id = serde_json::from_str::<Value>(text.as_str())
                    .ok()
                    .and_then(|v| v.get("id").cloned())
                    .unwrap_or(Value::Null);
                let _ = reply_tx.send(Message::Text(
                    json!({"type": "error", "id": id, "error": format!("bad command: {e}")}).to_string().into(),
                ));
            }
        }
    }
    sink.close();
    drop(reply_tx);
    let _ = forwarder.await;
    let _ = writer.await;
}
