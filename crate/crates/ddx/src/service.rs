//! HTTP JSON API v1.
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | POST | `/sessions` | `{"session_id"?}` | 201 `{session_id, state}` |
//! | POST | `/sessions/{id}/utterances` | `{"text", "segments"?}` | 200 `{session_id, reply, trace}` |
//! | GET | `/sessions/{id}/state` | | 200 `{session_id, state}` |
//! | GET | `/graph/path/{disease}` | | 200 `{disease, name, paths}` |
//!
//! Every body carries `schema_version`. Errors have the shape
//! `{"schema_version": 1, "error": {"code", "message", "field"?, "stage"?}}`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ddx_core::corpus::{SoapSegment, Utterance};
use ddx_core::dog::{disease_paths, DiagnosticPath, EntityKind};
use ddx_core::pipeline::{run_turn_with, Engine, PipelineError, SessionState, TurnTrace};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::session_log::{self, LogError, SessionLog};

pub const API_VERSION: u32 = 1;
const MAX_ID_LEN: usize = 64;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default)]
    pub session_id: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostUtterance {
    pub text: String,
    #[serde(default)]
    pub segments: Option<Vec<SoapSegment>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionBody {
    pub schema_version: u32,
    pub session_id: String,
    pub state: SessionState,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TurnBody {
    pub schema_version: u32,
    pub session_id: String,
    pub reply: String,
    pub trace: TurnTrace,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PathBody {
    pub schema_version: u32,
    pub disease: String,
    pub name: String,
    pub paths: Vec<DiagnosticPath>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub schema_version: u32,
    pub error: ErrorDetail,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    detail: ErrorDetail,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            detail: ErrorDetail {
                code: code.into(),
                message: message.into(),
                field: None,
                stage: None,
            },
        }
    }

    fn field(status: StatusCode, code: &str, field: impl Into<String>, message: impl Into<String>) -> Self {
        let mut e = Self::new(status, code, message);
        e.detail.field = Some(field.into());
        e
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Stage { stage, message } => {
                let mut err = Self::new(StatusCode::UNPROCESSABLE_ENTITY, "stage_failed", message);
                err.detail.stage = Some(stage.to_string());
                err
            }
            other => Self::internal(other.to_string()),
        }
    }
}

impl From<LogError> for ApiError {
    fn from(e: LogError) -> Self {
        Self::internal(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            schema_version: API_VERSION,
            error: self.detail,
        };
        (self.status, Json(body)).into_response()
    }
}

/// Field path of a deserialization error. Serde reports a missing field at
/// its parent, so the field name is taken from the message in that case.
fn error_field(path: &str, message: &str) -> String {
    let missing = message
        .strip_prefix("missing field `")
        .and_then(|rest| rest.split('`').next());
    match (path, missing) {
        (".", Some(f)) => f.to_string(),
        (p, Some(f)) => format!("{p}.{f}"),
        (p, None) => p.to_string(),
    }
}

fn parse_body<T: DeserializeOwned + Default>(body: &Bytes, allow_empty: bool) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return if allow_empty {
            Ok(T::default())
        } else {
            Err(ApiError::field(StatusCode::BAD_REQUEST, "malformed_body", ".", "request body is empty"))
        };
    }
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let message = e.inner().to_string();
        let field = error_field(&e.path().to_string(), &message);
        ApiError::field(StatusCode::BAD_REQUEST, "malformed_body", field, message)
    })
}

impl Default for PostUtterance {
    fn default() -> Self {
        Self {
            text: String::new(),
            segments: None,
        }
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= MAX_ID_LEN && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

#[derive(Debug)]
struct Live {
    state: SessionState,
    log: Option<SessionLog>,
}

/// Shared service state: the engine is read-only, each session sits
/// behind its own lock.
#[derive(Debug)]
pub struct AppState {
    engine: Arc<Engine>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Live>>>>,
    log_dir: Option<PathBuf>,
    counter: AtomicU64,
}

impl AppState {
    pub fn new(engine: Engine, log_dir: Option<PathBuf>) -> Self {
        Self {
            engine: Arc::new(engine),
            sessions: RwLock::new(HashMap::new()),
            log_dir,
            counter: AtomicU64::new(1),
        }
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    /// Rebuilds every session found in the log directory. Returns the
    /// number of sessions restored.
    pub fn restore(&self) -> Result<usize, LogError> {
        let Some(dir) = &self.log_dir else { return Ok(0) };
        let Ok(entries) = std::fs::read_dir(dir) else { return Ok(0) };
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        let mut sessions = self.sessions.write().expect("session table lock");
        for path in &paths {
            let replay = session_log::replay(&self.engine, path)?;
            let log = SessionLog::reopen(path, replay.records)?;
            sessions.insert(
                replay.state.id.clone(),
                Arc::new(Mutex::new(Live {
                    state: replay.state,
                    log: Some(log),
                })),
            );
        }
        Ok(paths.len())
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Live>>, ApiError> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session `{id}`")))
    }

    fn fresh_id(&self, taken: &HashMap<String, Arc<Mutex<Live>>>) -> String {
        loop {
            let id = format!("s{:06}", self.counter.fetch_add(1, Ordering::Relaxed));
            let on_disk = self
                .log_dir
                .as_ref()
                .is_some_and(|d| session_log::log_path(d, &id).exists());
            if !taken.contains_key(&id) && !on_disk {
                return id;
            }
        }
    }
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> Result<(StatusCode, Json<SessionBody>), ApiError> {
    let req: CreateSession = parse_body(&body, true)?;
    if let Some(id) = &req.session_id {
        if !valid_id(id) {
            return Err(ApiError::field(
                StatusCode::BAD_REQUEST,
                "malformed_body",
                "session_id",
                format!("session ids are 1 to {MAX_ID_LEN} characters of [A-Za-z0-9_-]"),
            ));
        }
    }
    let mut sessions = app.sessions.write().expect("session table lock");
    let id = match req.session_id {
        Some(id) if sessions.contains_key(&id) => {
            return Err(ApiError::field(StatusCode::CONFLICT, "session_exists", "session_id", format!("session `{id}` exists")));
        }
        Some(id) => id,
        None => app.fresh_id(&sessions),
    };
    let state = app.engine.session(id.clone());
    let log = match &app.log_dir {
        Some(dir) => Some(SessionLog::create(&session_log::log_path(dir, &id), &state)?),
        None => None,
    };
    let body = SessionBody {
        schema_version: API_VERSION,
        session_id: id.clone(),
        state: state.clone(),
    };
    sessions.insert(id, Arc::new(Mutex::new(Live { state, log })));
    log::info!("created session {}", body.session_id);
    Ok((StatusCode::CREATED, Json(body)))
}

async fn post_utterance(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<TurnBody>, ApiError> {
    let session = app.session(&id)?;
    let req: PostUtterance = parse_body(&body, false)?;
    if req.text.trim().is_empty() && req.segments.is_none() {
        return Err(ApiError::field(StatusCode::BAD_REQUEST, "malformed_body", "text", "text is empty"));
    }
    let utterance = Utterance {
        segments: req.segments,
        ..Utterance::patient(req.text)
    };
    let mut live = session.lock_owned().await;
    let engine = app.engine.clone();
    let (reply, trace) = tokio::task::spawn_blocking(move || -> Result<(String, TurnTrace), ApiError> {
        let mut next = live.state.clone();
        let (reply, trace) = run_turn_with(&engine, &mut next, utterance.clone())?;
        if let Some(log) = &mut live.log {
            log.turn(&utterance, &trace)?;
        }
        live.state = next;
        Ok((reply, trace))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(TurnBody {
        schema_version: API_VERSION,
        session_id: id,
        reply,
        trace,
    }))
}

async fn get_state(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionBody>, ApiError> {
    let session = app.session(&id)?;
    let live = session.lock().await;
    Ok(Json(SessionBody {
        schema_version: API_VERSION,
        session_id: id,
        state: live.state.clone(),
    }))
}

async fn get_paths(State(app): State<Arc<AppState>>, Path(disease): Path<String>) -> Result<Json<PathBody>, ApiError> {
    let graph = &app.engine.knowledge.graph;
    let entity = graph
        .entity(&disease)
        .filter(|e| e.kind == EntityKind::Disease)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_disease", format!("no disease `{disease}`")))?;
    let paths = disease_paths(graph, &disease).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(PathBody {
        schema_version: API_VERSION,
        name: entity.name.clone(),
        disease,
        paths,
    }))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "no_route", "no such endpoint")
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/:id/utterances", post(post_utterance))
        .route("/sessions/:id/state", get(get_state))
        .route("/graph/path/:disease", get(get_paths))
        .fallback(not_found)
        .with_state(app)
}

pub async fn serve(addr: SocketAddr, app: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(app)).await
}
