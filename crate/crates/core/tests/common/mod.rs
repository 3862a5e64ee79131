//! Shared fixtures: an in-process gateway and a scriptable model server.

#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Body;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use futures::StreamExt;
use serde_json::{json, Value};
use tokio::net::TcpListener;

use hanja_core::backends::{BackendDescriptor, BackendKind, Capability, RemoteBackend};
use hanja_core::config::Platform;
use hanja_core::gateway::{self, AppState};
use hanja_core::persistence::Store;

pub struct Gateway {
    pub base: String,
    pub client: reqwest::Client,
    pub store: Arc<Store>,
}

impl Gateway {
    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    /// Registers `email` and returns a session token.
    pub async fn login_as(&self, email: &str) -> String {
        let res = self
            .client
            .post(self.url("/api/auth/register"))
            .json(&json!({"email": email, "password": "correct horse"}))
            .send()
            .await
            .unwrap();
        assert_eq!(res.status(), StatusCode::CREATED, "{}", res.text().await.unwrap());
        let res = self
            .client
            .post(self.url("/api/auth/login"))
            .json(&json!({"email": email, "password": "correct horse"}))
            .send()
            .await
            .unwrap();
        assert_eq!(res.status(), StatusCode::OK);
        res.json::<Value>().await.unwrap()["token"].as_str().unwrap().to_string()
    }

    pub async fn post(&self, token: &str, path: &str, body: Value) -> reqwest::Response {
        self.client
            .post(self.url(path))
            .bearer_auth(token)
            .json(&body)
            .send()
            .await
            .unwrap()
    }

    pub async fn get(&self, token: &str, path: &str) -> reqwest::Response {
        self.client.get(self.url(path)).bearer_auth(token).send().await.unwrap()
    }
}

pub async fn spawn_gateway_with(platform: Platform, store: Store) -> Gateway {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let state = AppState::new(platform, store);
    let store = state.store.clone();
    tokio::spawn(gateway::serve(listener, state, std::future::pending()));
    Gateway {
        base: format!("http://{addr}"),
        client: reqwest::Client::new(),
        store,
    }
}

pub async fn spawn_gateway(platform: Platform) -> Gateway {
    spawn_gateway_with(platform, Store::open_in_memory().unwrap()).await
}

/// How the mock model server answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    /// Comma after every third character; no entities; translation echoes
    /// the prompt's source text in two-character deltas.
    Good,
    WrongLength,
    UnknownLabel,
    WrongVersion,
    ServerError,
    /// Streams two deltas and closes without `done`.
    Truncate,
    /// Emits a delta after `done`.
    DeltaAfterDone,
    /// Sends one delta, then an error line.
    MidStreamError,
}

#[derive(Clone)]
pub struct MockState {
    pub behavior: Behavior,
    pub delay: Duration,
    pub in_flight: Arc<AtomicUsize>,
    pub max_in_flight: Arc<AtomicUsize>,
    pub requests: Arc<Mutex<Vec<Value>>>,
}

pub struct MockModel {
    pub endpoint: String,
    pub state: MockState,
}

impl MockModel {
    pub fn max_seen(&self) -> usize {
        self.state.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<Value> {
        self.state.requests.lock().unwrap().clone()
    }

    pub fn descriptor(&self, name: &str) -> BackendDescriptor {
        BackendDescriptor {
            name: name.into(),
            kind: BackendKind::Remote,
            capabilities: vec![Capability::Punctuate, Capability::Ner, Capability::Translate],
            endpoint: Some(self.endpoint.clone()),
        }
    }

    pub fn backend(&self, max_in_flight: usize) -> RemoteBackend {
        let registry = Arc::new(hanja_core::punctuation::LabelRegistry::default());
        RemoteBackend::new(self.descriptor("mock"), registry, max_in_flight).unwrap()
    }
}

struct InFlight(Arc<AtomicUsize>);

impl Drop for InFlight {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

/// The source text embedded in a translation prompt.
pub fn prompt_source(prompt: &str) -> String {
    let line = prompt.lines().nth(1).unwrap_or_default();
    line.split_once(": ").map(|(_, t)| t.to_string()).unwrap_or_default()
}

fn ndjson(lines: Vec<Value>) -> Vec<Result<String, std::io::Error>> {
    lines.into_iter().map(|v| Ok(format!("{v}\n"))).collect()
}

async fn handle(State(state): State<MockState>, Json(req): Json<Value>) -> Response {
    state.requests.lock().unwrap().push(req.clone());
    let now = state.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    state.max_in_flight.fetch_max(now, Ordering::SeqCst);
    let guard = InFlight(state.in_flight.clone());
    if !state.delay.is_zero() {
        tokio::time::sleep(state.delay).await;
    }
    if state.behavior == Behavior::ServerError {
        return (StatusCode::SERVICE_UNAVAILABLE, "overloaded").into_response();
    }

    if let Some(text) = req.get("text").and_then(Value::as_str) {
        let n = text.chars().count();
        let task = req["task"].as_str().unwrap_or_default();
        let mut labels: Vec<String> = (0..n)
            .map(|i| match task {
                "punct" if i % 3 == 2 => "Comma".to_string(),
                "punct" => "None".to_string(),
                _ => "O".to_string(),
            })
            .collect();
        let mut v = 1;
        match state.behavior {
            Behavior::WrongLength => labels.push(labels.first().cloned().unwrap_or_else(|| "O".into())),
            Behavior::UnknownLabel => {
                if let Some(first) = labels.first_mut() {
                    *first = "Tilde".into();
                }
            }
            Behavior::WrongVersion => v = 2,
            _ => {}
        }
        drop(guard);
        return Json(json!({"v": v, "labels": labels})).into_response();
    }

    let prompt = req["prompt"].as_str().unwrap_or_default();
    let source: Vec<char> = prompt_source(prompt).chars().collect();
    let mut lines: Vec<Value> = source
        .chunks(2)
        .map(|c| json!({"delta": c.iter().collect::<String>(), "done": false}))
        .collect();
    match state.behavior {
        Behavior::Truncate => lines.truncate(2),
        Behavior::DeltaAfterDone => {
            lines.push(json!({"delta": "", "done": true}));
            lines.push(json!({"delta": "late", "done": false}));
        }
        Behavior::MidStreamError => {
            lines.truncate(1);
            lines.push(json!({"delta": "", "done": true, "error": "model crashed"}));
        }
        _ => lines.push(json!({"delta": "", "done": true})),
    }
    let delay = state.delay;
    let body = futures::stream::iter(ndjson(lines)).then(move |line| async move {
        if !delay.is_zero() {
            tokio::time::sleep(delay / 4).await;
        }
        line
    });
    let body = body.map(move |l| {
        let _ = &guard;
        l
    });
    Response::builder()
        .header("content-type", "application/x-ndjson")
        .body(Body::from_stream(body))
        .unwrap()
}

pub async fn spawn_mock(behavior: Behavior, delay: Duration) -> MockModel {
    let state = MockState {
        behavior,
        delay,
        in_flight: Arc::new(AtomicUsize::new(0)),
        max_in_flight: Arc::new(AtomicUsize::new(0)),
        requests: Arc::new(Mutex::new(Vec::new())),
    };
    let app = Router::new().route("/", post(handle)).with_state(state.clone());
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr: SocketAddr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    MockModel {
        endpoint: format!("http://{addr}/"),
        state,
    }
}

/// An address nothing is listening on.
pub async fn dead_endpoint() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    format!("http://{addr}/")
}

/// Parses an NDJSON body.
pub fn ndjson_lines(body: &str) -> Vec<Value> {
    body.lines().filter(|l| !l.is_empty()).map(|l| serde_json::from_str(l).unwrap()).collect()
}
