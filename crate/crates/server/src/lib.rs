//! HTTP and websocket service for live dialogue sessions.
//!
//! Routes:
//!
//! | method | path | purpose |
//! |---|---|---|
//! | `POST` | `/sessions` | create a session from a [`CreateSession`] body; returns tickets |
//! | `GET` | `/sessions` | list session summaries |
//! | `GET` | `/sessions/{id}` | one summary |
//! | `POST` | `/sessions/{id}/join` | check a token, learn its role |
//! | `GET` | `/sessions/{id}/view?token=` | everything the token's role may see |
//! | `POST` | `/sessions/{id}/actions` | submit an action ([`PostAction`]) |
//! | `GET` | `/sessions/{id}/log[?raw=true]` | episode log once the session ended |
//! | `GET` | `/sessions/{id}/stream?token=&after=` | websocket of [`EventFrame`]s; accepts [`ActionInput`] messages |
//!
//! Errors are JSON error frames (`{"type":"error","message":..,"retriable":..}`)
//! with a 4xx or 5xx status.

mod error;
mod session;
mod wire;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dialenv_core::agents::DEFAULT_RETRY_BUDGET;
use futures::{SinkExt, StreamExt};
use serde::Deserialize;
use tokio::net::TcpListener;
use tokio::sync::broadcast::error::RecvError;
use tower_http::services::ServeDir;

pub use error::ApiError;
pub use session::Subscription;
pub use wire::*;

use session::SessionHandle;

#[derive(Clone, Debug)]
pub struct ServerOptions {
    /// Directory of static UI assets served for paths outside the API.
    pub static_dir: Option<PathBuf>,
    /// Attempts per turn for server-driven agents.
    pub retry_budget: usize,
}

impl Default for ServerOptions {
    fn default() -> Self {
        ServerOptions {
            static_dir: None,
            retry_budget: DEFAULT_RETRY_BUDGET,
        }
    }
}

#[derive(Clone)]
struct AppState {
    sessions: Arc<RwLock<BTreeMap<String, SessionHandle>>>,
    options: Arc<ServerOptions>,
}

impl AppState {
    fn get(&self, id: &str) -> Result<SessionHandle, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }
}

pub fn router(options: ServerOptions) -> Router {
    let static_dir = options.static_dir.clone();
    let state = AppState {
        sessions: Arc::default(),
        options: Arc::new(options),
    };
    let api = Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(session_summary))
        .route("/sessions/{id}/join", post(join))
        .route("/sessions/{id}/view", get(view))
        .route("/sessions/{id}/actions", post(post_action))
        .route("/sessions/{id}/log", get(log))
        .route("/sessions/{id}/stream", get(stream))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, options: ServerOptions) -> std::io::Result<()> {
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(options)).await
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    body.map(|Json(t)| t)
        .map_err(|e| ApiError::new(e.status(), e.body_text()))
}

async fn create_session(
    State(app): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<CreatedSession>), ApiError> {
    let req = json_body(body)?;
    let (handle, created) = session::create(req, app.options.retry_budget).await?;
    app.sessions
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .insert(created.session_id.clone(), handle);
    Ok((StatusCode::CREATED, Json(created)))
}

async fn list_sessions(State(app): State<AppState>) -> Result<Json<Vec<SessionSummary>>, ApiError> {
    let handles: Vec<SessionHandle> = app
        .sessions
        .read()
        .unwrap_or_else(|e| e.into_inner())
        .values()
        .cloned()
        .collect();
    let mut out = Vec::with_capacity(handles.len());
    for h in handles {
        out.push(h.summary().await?);
    }
    out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.session_id.cmp(&b.session_id)));
    Ok(Json(out))
}

async fn session_summary(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionSummary>, ApiError> {
    Ok(Json(app.get(&id)?.summary().await?))
}

async fn join(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<JoinRequest>, JsonRejection>,
) -> Result<Json<Joined>, ApiError> {
    let req = json_body(body)?;
    Ok(Json(app.get(&id)?.join(req.token).await?))
}

#[derive(Deserialize)]
struct TokenQuery {
    token: String,
}

async fn view(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<TokenQuery>,
) -> Result<Json<RoleView>, ApiError> {
    Ok(Json(app.get(&id)?.view(q.token).await?))
}

async fn post_action(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<PostAction>, JsonRejection>,
) -> Result<Json<Posted>, ApiError> {
    let req = json_body(body)?;
    Ok(Json(app.get(&id)?.submit(req.token, req.input, false).await?))
}

#[derive(Deserialize)]
struct LogQuery {
    #[serde(default)]
    raw: bool,
}

async fn log(State(app): State<AppState>, Path(id): Path<String>, Query(q): Query<LogQuery>) -> Result<Response, ApiError> {
    let text = app.get(&id)?.log(q.raw).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

#[derive(Deserialize)]
struct StreamQuery {
    token: String,
    #[serde(default)]
    after: u64,
}

async fn stream(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<StreamQuery>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let handle = app.get(&id)?;
    let sub = handle.subscribe(q.token.clone(), q.after).await?;
    Ok(ws.on_upgrade(move |socket| pump(socket, handle, q.token, q.after, sub)))
}

/// Forwards frames to the socket and actions from it. Frames at or below the
/// last sequence sent are skipped, so catching up after a lag never repeats
/// or drops one.
async fn pump(socket: WebSocket, handle: SessionHandle, token: String, after: u64, sub: Subscription) {
    let (mut sink, mut incoming) = socket.split();
    let mut last = after;
    let Subscription { backlog, mut live, .. } = sub;
    let mut pending = backlog;
    loop {
        for frame in pending.drain(..) {
            if frame.seq <= last {
                continue;
            }
            last = frame.seq;
            let text = serde_json::to_string(&frame).expect("frames serialize");
            if sink.send(Message::Text(text.into())).await.is_err() {
                return;
            }
        }
        tokio::select! {
            frame = live.recv() => match frame {
                Ok(frame) => pending.push(frame),
                Err(RecvError::Lagged(_)) => match handle.subscribe(token.clone(), last).await {
                    Ok(sub) => {
                        pending = sub.backlog;
                        live = sub.live;
                    }
                    Err(_) => return,
                },
                Err(RecvError::Closed) => return,
            },
            msg = incoming.next() => match msg {
                Some(Ok(Message::Text(text))) => match serde_json::from_str::<ActionInput>(&text) {
                    Ok(input) => {
                        // Errors come back as frames on this stream.
                        let _ = handle.submit(token.clone(), input, true).await;
                    }
                    Err(e) => handle.report(token.clone(), ApiError::bad_request(format!("unreadable message: {e}"))).await,
                },
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => return,
                Some(Ok(_)) => {}
            },
        }
    }
}
