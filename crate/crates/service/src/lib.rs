//! HTTP and WebSocket front end for characterization sessions.
//!
//! Each session owns one protocol runner. Commands for a session are queued
//! on its executor and run one at a time; phases run on blocking threads so
//! the server stays responsive while a participant plays.

mod human;
mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use paretohil_core::api::*;
use paretohil_core::moo::{run_characterization_with, CharEvent};
use paretohil_core::protocol::to_jsonl;
use paretohil_core::record::Phase;
use paretohil_core::simuser::SimUser;
use paretohil_core::task::TaskEnv;
use paretohil_core::wire::{ClientMsg, ServerMsg};
use paretohil_core::Error;
use serde::Deserialize;
use tokio::sync::broadcast::error::RecvError;

pub use human::{HumanPort, Pacing};
use session::Session;

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Session logs are streamed to `<log_dir>/<id>.jsonl` when set.
    pub log_dir: Option<PathBuf>,
    pub pacing: Pacing,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

struct Inner {
    cfg: ServiceConfig,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    counter: AtomicU64,
}

impl AppState {
    pub fn new(cfg: ServiceConfig) -> Self {
        Self(Arc::new(Inner { cfg, sessions: RwLock::new(HashMap::new()), counter: AtomicU64::new(0) }))
    }

    fn get(&self, id: &str) -> Result<Arc<Session>, ApiErr> {
        self.0.sessions.read().expect("sessions lock").get(id).cloned().ok_or_else(|| ApiErr::not_found(id))
    }
}

pub struct ApiErr {
    status: StatusCode,
    body: ApiError,
}

impl ApiErr {
    fn new(status: StatusCode, kind: &str, error: impl Into<String>) -> Self {
        Self { status, body: ApiError { error: error.into(), kind: kind.into() } }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id:?}"))
    }

    fn conflict(msg: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", msg)
    }
}

impl From<Error> for ApiErr {
    fn from(e: Error) -> Self {
        let (status, kind) = match &e {
            Error::InvalidArgument(_) => (StatusCode::BAD_REQUEST, "invalid_argument"),
            Error::Config(_) => (StatusCode::BAD_REQUEST, "config"),
            Error::UnsupportedVersion { .. } => (StatusCode::BAD_REQUEST, "unsupported_version"),
            Error::Port(_) => (StatusCode::BAD_GATEWAY, "port"),
            Error::Numerical(_) => (StatusCode::UNPROCESSABLE_ENTITY, "numerical"),
            Error::SimulationFault { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "simulation_fault"),
            Error::Log(_) | Error::Io(_) | Error::Json(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, kind, e.to_string())
    }
}

impl IntoResponse for ApiErr {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiErr>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/advance", post(advance))
        .route("/sessions/{id}/models", get(get_models))
        .route("/sessions/{id}/log", get(get_log))
        .route("/sessions/{id}/ws", get(open_socket))
        .route("/characterizations", post(characterize))
        .with_state(state)
}

/// Binds `addr` and serves in the background. Returns the bound address.
pub async fn spawn(addr: SocketAddr, cfg: ServiceConfig) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let app = router(AppState::new(cfg));
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            log::error!("server stopped: {e}");
        }
    });
    Ok((local, handle))
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, cfg: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(cfg))).await
}

async fn create_session(State(app): State<AppState>, Json(req): Json<CreateSession>) -> ApiResult<(StatusCode, Json<SessionStatus>)> {
    let n = app.0.counter.fetch_add(1, Ordering::Relaxed) + 1;
    let id = format!("s{n}");
    let log_path = app.0.cfg.log_dir.as_ref().map(|d| d.join(format!("{id}.jsonl")));
    let pacing = app.0.cfg.pacing;
    let s = tokio::task::spawn_blocking({
        let id = id.clone();
        move || Session::create(id, req.config, req.player, log_path, pacing)
    })
    .await
    .map_err(|e| ApiErr::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let s = Arc::new(s);
    app.0.sessions.write().expect("sessions lock").insert(id, s.clone());
    Ok((StatusCode::CREATED, Json(s.status())))
}

async fn list_sessions(State(app): State<AppState>) -> Json<Vec<SessionStatus>> {
    let mut v: Vec<SessionStatus> = app.0.sessions.read().expect("sessions lock").values().map(|s| s.status()).collect();
    v.sort_by(|a, b| a.id.len().cmp(&b.id.len()).then(a.id.cmp(&b.id)));
    Json(v)
}

async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionStatus>> {
    Ok(Json(app.get(&id)?.status()))
}

#[derive(Debug, Default, Deserialize)]
struct AdvanceQuery {
    #[serde(default)]
    wait: bool,
}

async fn advance(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<AdvanceQuery>,
) -> ApiResult<(StatusCode, Json<AdvanceResponse>)> {
    let s = app.get(&id)?;
    let guard = s.exec.clone().lock_owned().await;
    let phase = Session::next_phase(&guard).map_err(ApiErr::conflict)?;
    s.view.write().expect("view lock").running = Some(phase);
    let job = tokio::spawn(s.clone().run_phase(guard));
    if !q.wait {
        return Ok((StatusCode::ACCEPTED, Json(AdvanceResponse { phase, done: false, status: s.status() })));
    }
    match job.await {
        Ok(Ok(phase)) => Ok((StatusCode::OK, Json(AdvanceResponse { phase, done: true, status: s.status() }))),
        Ok(Err(e)) => Err(e.into()),
        Err(e) => Err(ApiErr::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
    }
}

async fn get_models(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ModelsView>> {
    let s = app.get(&id)?;
    let models = s.view.read().expect("view lock").models.clone();
    Ok(Json(models))
}

async fn get_log(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = app.get(&id)?;
    let log = s.view.read().expect("view lock").log.clone();
    let text = to_jsonl(&log)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

async fn characterize(Json(req): Json<CharacterizeRequest>) -> ApiResult<Json<CharacterizeResponse>> {
    let out = tokio::task::spawn_blocking(move || -> paretohil_core::Result<CharacterizeResponse> {
        let env = TaskEnv::new(req.plant, req.disturbance)?;
        let mut user = SimUser::new(req.profile, env)?;
        let out = run_characterization_with(&mut user, &req.config, Phase::PreHil, req.seed, &mut |_: CharEvent<'_>| {})
            .map_err(|a| a.error)?;
        let grid = req.config.grid()?;
        Ok(CharacterizeResponse {
            records: out.records,
            snapshots: out.snapshots,
            models: out.models.model_update(&grid),
            front: out.front,
        })
    })
    .await
    .map_err(|e| ApiErr::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(out))
}

async fn open_socket(State(app): State<AppState>, Path(id): Path<String>, ws: WebSocketUpgrade) -> ApiResult<Response> {
    let s = app.get(&id)?;
    if s.socket_open.swap(true, Ordering::SeqCst) {
        return Err(ApiErr::conflict("a client is already connected to this session"));
    }
    Ok(ws.on_upgrade(move |socket| async move {
        drive_socket(socket, &s).await;
        s.socket_open.store(false, Ordering::SeqCst);
    }))
}

fn encode(msg: &ServerMsg) -> Message {
    Message::Text(serde_json::to_string(msg).expect("server messages serialize").into())
}

async fn drive_socket(mut socket: WebSocket, s: &Session) {
    let mut rx = s.events.subscribe();
    let mut greeting = Vec::new();
    if let Some(p) = s.view.read().expect("view lock").progress {
        greeting.push(ServerMsg::PhaseUpdate { phase: p.phase, iteration: p.iteration, total: p.total });
    }
    if let Some(q) = s.pending.lock().expect("pending lock").clone() {
        greeting.push(q);
    }
    for m in &greeting {
        if socket.send(encode(m)).await.is_err() {
            return;
        }
    }
    loop {
        tokio::select! {
            out = rx.recv() => match out {
                Ok(msg) => {
                    if socket.send(encode(&msg)).await.is_err() {
                        return;
                    }
                }
                Err(RecvError::Lagged(n)) => {
                    log::warn!("session {}: socket lagged, {n} messages dropped", s.id);
                    let pending = s.pending.lock().expect("pending lock").clone();
                    if let Some(q) = pending {
                        if socket.send(encode(&q)).await.is_err() {
                            return;
                        }
                    }
                }
                Err(RecvError::Closed) => return,
            },
            inc = socket.recv() => match inc {
                Some(Ok(Message::Text(text))) => {
                    let reply = match serde_json::from_str::<ClientMsg>(&text) {
                        Err(e) => Some(format!("malformed message: {e}")),
                        Ok(msg) => match &s.inbox {
                            None => Some("session is played by the simulated user".into()),
                            Some(tx) => tx.lock().expect("inbox lock").send(msg).err().map(|_| "session closed".into()),
                        },
                    };
                    if let Some(message) = reply {
                        if socket.send(encode(&ServerMsg::Error { message })).await.is_err() {
                            return;
                        }
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}
