//! HTTP API over progressive indexing sessions.
//!
//! Each session owns one corpus: it is bundled and indexed in the
//! background, users adopt new index versions when notified through the
//! polled status, and submitted runs are evaluated against whatever version
//! is active. Session state is written under `AVIATOR_DATA_DIR` (when set)
//! and picked up again on restart.

mod error;
mod session;

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;

use progeval_core::evaluation::Measure;
use progeval_core::progression::{Decision, StatusView};
use progeval_core::retrieval::ModelSpec;
use progeval_core::textproc::StemmerRegistry;

pub use error::ApiError;
pub use session::{
    save_segments, ConvergencePayload, ModelInfo, ReplayConfig, RunRecord, RunSummary, Scope, Session, SessionConfig,
    MAX_MODELS,
};

pub const DATA_DIR_ENV: &str = "AVIATOR_DATA_DIR";

pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    data_dir: Option<PathBuf>,
    registry: Arc<StemmerRegistry>,
    replay_speedup: f64,
}

impl AppState {
    /// Without a data directory, sessions live only in memory.
    pub fn new(data_dir: Option<PathBuf>, registry: StemmerRegistry) -> Arc<Self> {
        Self::with_replay_speedup(data_dir, registry, 1.0)
    }

    /// Sets the speedup used by replay sessions that do not choose one.
    pub fn with_replay_speedup(data_dir: Option<PathBuf>, registry: StemmerRegistry, speedup: f64) -> Arc<Self> {
        Arc::new(Self {
            sessions: RwLock::new(HashMap::new()),
            data_dir,
            registry: Arc::new(registry),
            replay_speedup: speedup,
        })
    }

    pub fn from_env() -> Arc<Self> {
        Self::new(std::env::var_os(DATA_DIR_ENV).map(PathBuf::from), StemmerRegistry::new())
    }

    fn sessions_dir(&self) -> Option<PathBuf> {
        self.data_dir.as_ref().map(|d| d.join("sessions"))
    }

    /// Reopens every session found in the data directory. Returns how many
    /// were restored; broken ones are logged and skipped.
    pub fn restore(&self) -> usize {
        let Some(dir) = self.sessions_dir() else { return 0 };
        let Ok(entries) = fs::read_dir(&dir) else { return 0 };
        let mut restored = 0;
        for entry in entries.flatten() {
            let path = entry.path();
            if !path.join("config.json").is_file() {
                continue;
            }
            let id = entry.file_name().to_string_lossy().into_owned();
            match Session::load(id.clone(), path, &self.registry) {
                Ok(session) => {
                    self.write().insert(id, Arc::new(session));
                    restored += 1;
                }
                Err(e) => tracing::warn!(session = %id, error = %e, "could not restore session"),
            }
        }
        restored
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, HashMap<String, Arc<Session>>> {
        self.sessions.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id:?}")))
    }

    pub async fn create_session(&self, mut config: SessionConfig) -> Result<Arc<Session>, ApiError> {
        config.replay.speedup_factor.get_or_insert(self.replay_speedup);
        let id = uuid::Uuid::new_v4().simple().to_string();
        let dir = self.sessions_dir().map(|d| d.join(&id));
        let registry = Arc::clone(&self.registry);
        let sid = id.clone();
        let session = tokio::task::spawn_blocking(move || Session::open(sid, config, &registry, dir, None))
            .await
            .map_err(ApiError::internal)??;
        let session = Arc::new(session);
        self.write().insert(id, Arc::clone(&session));
        Ok(session)
    }

    /// Stops every builder thread.
    pub fn shutdown(&self) {
        for s in self.write().values() {
            s.shutdown();
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/status", get(get_status))
        .route("/sessions/{id}/index/decision", post(post_decision))
        .route("/sessions/{id}/runs", post(post_run).get(list_runs))
        .route("/sessions/{id}/evaluations", get(get_evaluations))
        .route("/sessions/{id}/settings", get(get_settings).put(put_settings))
        .route("/sessions/{id}/analysis/convergence", get(get_convergence))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Parses a JSON body into `T`, answering 400 instead of axum's 422 for shape errors.
fn from_body<T: for<'de> Deserialize<'de>>(body: Result<Json<Value>, axum::extract::rejection::JsonRejection>) -> Result<T, ApiError> {
    let Json(value) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    serde_json::from_value(value).map_err(ApiError::bad_request)
}

fn status_json(id: &str, view: &StatusView) -> Value {
    let mut v = serde_json::to_value(view).expect("status serializes");
    v["session_id"] = json!(id);
    v
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Result<Json<Value>, axum::extract::rejection::JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let config: SessionConfig = from_body(body)?;
    let session = state.create_session(config).await?;
    tracing::info!(session = %session.id, "session created");
    Ok((
        StatusCode::CREATED,
        Json(json!({ "session_id": session.id, "status": *session.status() })),
    ))
}

async fn list_sessions(State(state): State<Arc<AppState>>) -> Json<Value> {
    let mut ids: Vec<String> = state.sessions.read().unwrap_or_else(|e| e.into_inner()).keys().cloned().collect();
    ids.sort();
    Json(json!({ "sessions": ids }))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let s = state.session(&id)?;
    Ok(Json(json!({
        "session_id": s.id,
        "config": s.config(),
        "bundle_sizes": s.plan().bundle_sizes(),
        "models": s.models().await,
        "measure": s.measure().await,
        "status": *s.status(),
    })))
}

async fn get_status(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let s = state.session(&id)?;
    Ok(Json(status_json(&s.id, &s.status())))
}

#[derive(Deserialize)]
struct DecisionBody {
    action: String,
}

async fn post_decision(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<Value>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let s = state.session(&id)?;
    let body: DecisionBody = from_body(body)?;
    let decision: Decision = body.action.parse().map_err(ApiError::bad_request)?;
    let view = s.decide(decision)?;
    Ok(Json(status_json(&s.id, &view)))
}

#[derive(Deserialize)]
struct RunBody {
    model_id: String,
    #[serde(default)]
    params: std::collections::BTreeMap<String, f64>,
}

async fn post_run(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<Value>, axum::extract::rejection::JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let s = state.session(&id)?;
    let body: RunBody = from_body(body)?;
    let model = ModelSpec::from_id(&body.model_id, &body.params).map_err(ApiError::bad_request)?;
    let summary = s.submit_run(model).await?;
    let code = if summary.cached { StatusCode::OK } else { StatusCode::CREATED };
    Ok((code, Json(summary)))
}

async fn list_runs(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let s = state.session(&id)?;
    Ok(Json(json!({ "runs": s.runs().await })))
}

fn parse_measure(q: &HashMap<String, String>) -> Result<Option<Measure>, ApiError> {
    q.get("measure").map(|m| m.parse().map_err(ApiError::bad_request)).transpose()
}

async fn get_evaluations(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<Value>, ApiError> {
    let s = state.session(&id)?;
    let measure = parse_measure(&q)?;
    let scope = match q.get("scope").map(String::as_str) {
        None | Some("overall") => Scope::Overall,
        Some("topic") => Scope::Topic,
        Some(other) => return Err(ApiError::bad_request(format!("unknown scope {other:?}; use topic or overall"))),
    };
    let version = match q.get("version") {
        None => None,
        Some(v) => Some(v.parse().map_err(|_| ApiError::bad_request(format!("bad version {v:?}")))?),
    };
    Ok(Json(json!(s.evaluations(measure, scope, version).await?)))
}

async fn get_settings(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let s = state.session(&id)?;
    Ok(Json(json!({ "measure": s.measure().await, "models": s.models().await })))
}

#[derive(Deserialize)]
struct SettingsBody {
    measure: Option<String>,
}

async fn put_settings(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<Value>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let s = state.session(&id)?;
    let body: SettingsBody = from_body(body)?;
    if let Some(m) = body.measure {
        s.set_measure(m.parse().map_err(ApiError::bad_request)?).await?;
    }
    Ok(Json(json!({ "measure": s.measure().await, "models": s.models().await })))
}

async fn get_convergence(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<Value>, ApiError> {
    let s = state.session(&id)?;
    let measure = parse_measure(&q)?;
    Ok(Json(json!(*s.convergence(measure).await?)))
}
