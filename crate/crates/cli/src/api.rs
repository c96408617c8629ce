//! JSON-over-HTTP service: ingest, query, feedback and session inspection.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use erag_core::ingest::{load_corpus, Document};
use erag_core::session::{lock, Turn};
use erag_core::{Engine, EngineConfig, Error, FeedbackOutcome, GroundedAnswer, Profile, SessionStore, Stage, Verdict};
use serde::{Deserialize, Serialize};

use crate::openapi;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    UpstreamUnavailable,
    Conflict,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::UpstreamUnavailable => StatusCode::BAD_GATEWAY,
            ErrorCode::Conflict => StatusCode::CONFLICT,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{message}")]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            stage: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Upstream { .. } | Error::EmptyCompletion => ErrorCode::UpstreamUnavailable,
            Error::UnknownSession(_) | Error::UnknownTurn { .. } => ErrorCode::NotFound,
            Error::InvalidConfig(_)
            | Error::RaggedRow { .. }
            | Error::MalformedTable { .. }
            | Error::UnsupportedDocument { .. }
            | Error::EmptyFile(_)
            | Error::Unreadable { .. }
            | Error::DuplicateId(_)
            | Error::WrongKind { .. }
            | Error::Json(_) => ErrorCode::BadRequest,
            _ => ErrorCode::Internal,
        };
        Self {
            code,
            message: e.to_string(),
            stage: e.stage(),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::bad_request(r.body_text())
    }
}

impl From<tokio::task::JoinError> for ApiError {
    fn from(e: tokio::task::JoinError) -> Self {
        Self::new(ErrorCode::Internal, format!("worker failed: {e}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

/// `Json` whose rejections are reported as [`ApiError`] bodies.
#[derive(FromRequest)]
#[from_request(via(axum::Json), rejection(ApiError))]
pub struct ApiJson<T>(pub T);

pub struct AppState {
    config: EngineConfig,
    index_dir: Option<PathBuf>,
    engine: RwLock<Option<Arc<Engine>>>,
    sessions: Arc<SessionStore>,
    building: AtomicBool,
    // FIFO locks so requests on one session run in arrival order
    session_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

pub type SharedState = Arc<AppState>;

/// Held while an ingest runs; other requests see 409 until it drops.
pub struct BuildGuard(SharedState);

impl Drop for BuildGuard {
    fn drop(&mut self) {
        self.0.building.store(false, Ordering::SeqCst);
    }
}

impl AppState {
    /// `index_dir`, when set, receives every built index.
    pub fn new(
        config: EngineConfig,
        index_dir: Option<PathBuf>,
        engine: Option<Engine>,
        sessions: SessionStore,
    ) -> Self {
        Self {
            config,
            index_dir,
            engine: RwLock::new(engine.map(Arc::new)),
            sessions: Arc::new(sessions),
            building: AtomicBool::new(false),
            session_locks: Mutex::default(),
        }
    }

    /// Serve the index persisted in `dir`, if there is one. Sessions and
    /// the feedback log are kept in the same directory.
    pub fn open(dir: PathBuf, config: Option<EngineConfig>) -> erag_core::Result<Self> {
        std::fs::create_dir_all(&dir)?;
        let engine = if Engine::exists(&dir) {
            Some(Engine::load(&dir, config.clone())?)
        } else {
            None
        };
        let config = config
            .or_else(|| engine.as_ref().map(|e| e.config.clone()))
            .unwrap_or_default();
        let sessions = SessionStore::open(&dir)?;
        Ok(Self::new(config, Some(dir), engine, sessions))
    }

    pub fn sessions(&self) -> &Arc<SessionStore> {
        &self.sessions
    }

    pub fn try_begin_build(self: &Arc<Self>) -> Option<BuildGuard> {
        self.building
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
            .ok()
            .map(|_| BuildGuard(self.clone()))
    }

    fn engine(&self) -> Result<Arc<Engine>, ApiError> {
        if self.building.load(Ordering::SeqCst) {
            return Err(ApiError::new(ErrorCode::Conflict, "an index build is in progress"));
        }
        self.engine
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .clone()
            .ok_or_else(|| ApiError::not_found("no index has been built; POST /v1/ingest first"))
    }

    fn session_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        lock(&self.session_locks).entry(id.to_string()).or_default().clone()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InlineDocument {
    /// Relative path; its extension selects the parser.
    pub file_name: String,
    pub content: String,
    /// Same keys a sidecar `.meta.json` would carry.
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestRequest {
    #[serde(default)]
    pub corpus_dir: Option<PathBuf>,
    #[serde(default)]
    pub documents: Vec<InlineDocument>,
    /// Partial engine configuration laid over the defaults; the server's
    /// configuration is used when absent.
    #[serde(default)]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestResponse {
    pub chunk_count: usize,
    pub index_version: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryRequest {
    pub session_id: String,
    pub query: String,
    #[serde(default = "default_profile")]
    pub profile: Profile,
}

fn default_profile() -> Profile {
    Profile::Advanced
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeedbackRequest {
    pub session_id: String,
    pub turn_id: String,
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub turns: Vec<Turn>,
    pub retry_budget_left: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub index_version: Option<String>,
}

async fn ingest(
    State(st): State<SharedState>,
    ApiJson(req): ApiJson<IngestRequest>,
) -> Result<Json<IngestResponse>, ApiError> {
    let guard = st
        .try_begin_build()
        .ok_or_else(|| ApiError::new(ErrorCode::Conflict, "an index build is already running"))?;
    let worker = st.clone();
    let engine = tokio::task::spawn_blocking(move || -> Result<Engine, ApiError> {
        let config = match req.config {
            Some(v) => EngineConfig::from_value(v)?,
            None => worker.config.clone(),
        };
        let mut docs = match &req.corpus_dir {
            Some(dir) => load_corpus(dir)?,
            None => Vec::new(),
        };
        for d in &req.documents {
            let mut doc = Document::from_named(&d.file_name, &d.content)?;
            doc.metadata.extend(d.metadata.clone());
            docs.push(doc);
        }
        if docs.is_empty() {
            return Err(ApiError::bad_request("no documents: give corpus_dir or documents"));
        }
        let engine = Engine::build(&docs, config)?;
        if let Some(dir) = &worker.index_dir {
            engine.save(dir)?;
        }
        Ok(engine)
    })
    .await??;
    let resp = IngestResponse {
        chunk_count: engine.advanced.chunks.len(),
        index_version: engine.version().to_string(),
    };
    log::info!("built index {} with {} chunks", resp.index_version, resp.chunk_count);
    *st.engine.write().unwrap_or_else(|p| p.into_inner()) = Some(Arc::new(engine));
    drop(guard);
    Ok(Json(resp))
}

async fn query(
    State(st): State<SharedState>,
    ApiJson(req): ApiJson<QueryRequest>,
) -> Result<Json<GroundedAnswer>, ApiError> {
    if req.query.trim().is_empty() {
        return Err(ApiError::bad_request("query is empty"));
    }
    let engine = st.engine()?;
    let turn_lock = st.session_lock(&req.session_id);
    let _turn = turn_lock.lock().await;
    let sessions = st.sessions.clone();
    let answer =
        tokio::task::spawn_blocking(move || engine.answer(&sessions, &req.session_id, &req.query, req.profile))
            .await??;
    Ok(Json(answer))
}

async fn feedback(
    State(st): State<SharedState>,
    ApiJson(req): ApiJson<FeedbackRequest>,
) -> Result<Json<FeedbackOutcome>, ApiError> {
    let verdict = Verdict::parse(&req.verdict)
        .ok_or_else(|| ApiError::bad_request(format!("verdict must be \"up\" or \"down\", got {:?}", req.verdict)))?;
    let engine = st.engine()?;
    let turn_lock = st.session_lock(&req.session_id);
    let _turn = turn_lock.lock().await;
    let sessions = st.sessions.clone();
    let outcome =
        tokio::task::spawn_blocking(move || engine.feedback(&sessions, &req.session_id, &req.turn_id, verdict))
            .await??;
    Ok(Json(outcome))
}

async fn session(State(st): State<SharedState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let sessions = st.sessions.clone();
    let view = tokio::task::spawn_blocking(move || -> Result<SessionView, ApiError> {
        let handle = sessions.session(&id, false).map_err(|e| match e {
            Error::InvalidConfig(_) => ApiError::not_found(format!("unknown session {id}")),
            other => other.into(),
        })?;
        let s = lock(&handle);
        Ok(SessionView {
            session_id: id,
            turns: s.turns.iter().cloned().collect(),
            retry_budget_left: s.retry_budget_left(),
        })
    })
    .await??;
    Ok(Json(view))
}

async fn health(State(st): State<SharedState>) -> Json<Health> {
    let version = st
        .engine
        .read()
        .unwrap_or_else(|p| p.into_inner())
        .as_ref()
        .map(|e| e.version().to_string());
    Json(Health {
        status: "ok".into(),
        index_version: version,
    })
}

async fn spec() -> Json<serde_json::Value> {
    Json(openapi::document())
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such route")
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/v1/ingest", post(ingest))
        .route("/v1/query", post(query))
        .route("/v1/feedback", post(feedback))
        .route("/v1/sessions/{id}", get(session))
        .route("/v1/health", get(health))
        .route("/v1/spec", get(spec))
        .fallback(fallback)
        .with_state(state)
}

/// Bind `addr` and serve until ctrl-c.
pub async fn serve(state: SharedState, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
