//! HTTP service over the recommendation pipeline.
//!
//! | Method | Path                   | Response                          |
//! |--------|------------------------|-----------------------------------|
//! | GET    | `/api/recommendations` | [`PipelineResult`]                |
//! | GET    | `/api/profile/{hour}`  | [`ProfileResponse`]               |
//! | POST   | `/api/feedback`        | 204, appends to the feedback log  |
//! | GET    | `/api/health`          | [`HealthResponse`]                |
//!
//! Anything else is served from the static directory when one is set.
//! Errors are JSON objects `{error, message, parameter?}`.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{Timelike, Utc};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::dataset::{read_dataset, MomentsDataset};
use crate::error::{Error, Result};
use crate::models::{load_model, ModelKind, TrainedRegressor};
use crate::pipeline::{phase1_tag_profile, run_pipeline, Library, PipelineResult, TagStrength, DEFAULT_K};

pub const FEEDBACK_FILE: &str = "feedback.jsonl";
pub const PROFILE_TAGS: usize = 50;

/// Everything a request reads. Immutable once loaded.
pub struct Artifacts {
    pub dataset: MomentsDataset,
    pub model: TrainedRegressor,
    pub library: Library,
}

impl Artifacts {
    /// Loads the model file, the dataset directory and the library (a file,
    /// or a directory holding `library.jsonl`; defaults to the dataset
    /// directory).
    pub fn load(model: &Path, dataset_dir: &Path, library: Option<&Path>) -> Result<Self> {
        let model = load_model(model)?;
        let dataset = read_dataset(dataset_dir, model.target_feature)?;
        let library = Library::load_from(library.unwrap_or(dataset_dir))?;
        let artifacts = Self { dataset, model, library };
        artifacts.check()?;
        Ok(artifacts)
    }

    /// Fails early on artifacts that could never serve a request.
    pub fn check(&self) -> Result<()> {
        if let Some(v) = &self.model.vocabulary {
            if *v != self.dataset.vocabulary {
                return Err(Error::VocabularyMismatch {
                    expected: v.len(),
                    actual: self.dataset.vocabulary.len(),
                });
            }
        }
        if self.dataset.is_empty() {
            return Err(Error::invalid("dataset", "no moments"));
        }
        if self.library.is_empty() {
            return Err(Error::invalid("library", "no tracks"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackAction {
    Listened,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub session_id: String,
    pub track_key: String,
    pub action: FeedbackAction,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

/// One line of the feedback log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub session_id: String,
    pub track_key: String,
    pub action: FeedbackAction,
    /// RFC 3339, UTC.
    pub at: String,
    pub epsilon_at_time: Option<f64>,
}

/// Append-only JSON-lines log; one writer, each line flushed.
pub struct FeedbackLog {
    path: PathBuf,
    writer: Mutex<BufWriter<File>>,
}

impl FeedbackLog {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file =
            OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self { path, writer: Mutex::new(BufWriter::new(file)) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, event: &FeedbackEvent) -> Result<()> {
        let mut line = serde_json::to_vec(event)?;
        line.push(b'\n');
        let mut w = self.writer.lock().unwrap();
        w.write_all(&line).and_then(|()| w.flush()).map_err(|e| Error::io(&self.path, e))
    }
}

type HourSource = Arc<dyn Fn() -> u32 + Send + Sync>;

pub struct AppState {
    artifacts: Option<Artifacts>,
    feedback: FeedbackLog,
    current_hour: HourSource,
}

impl AppState {
    /// `artifacts` may be `None`: the service then answers 503 until
    /// restarted with them.
    pub fn new(artifacts: Option<Artifacts>, feedback_log: impl Into<PathBuf>) -> Result<Self> {
        Ok(Self {
            artifacts,
            feedback: FeedbackLog::open(feedback_log)?,
            current_hour: Arc::new(|| chrono::Local::now().hour()),
        })
    }

    /// Replaces the clock used when a request omits `hour`.
    pub fn with_hour_source(mut self, f: impl Fn() -> u32 + Send + Sync + 'static) -> Self {
        self.current_hour = Arc::new(f);
        self
    }

    pub fn feedback_log(&self) -> &Path {
        self.feedback.path()
    }
}

#[derive(Debug, Serialize)]
struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    error: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    parameter: Option<&'static str>,
}

impl ApiError {
    fn bad_param(parameter: &'static str, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            error: "invalid_parameter",
            message: message.into(),
            parameter: Some(parameter),
        }
    }

    fn bad_body(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            error: "invalid_body",
            message: message.into(),
            parameter: None,
        }
    }

    fn not_loaded() -> Self {
        Self {
            status: StatusCode::SERVICE_UNAVAILABLE,
            error: "not_loaded",
            message: "model and dataset are not loaded".into(),
            parameter: None,
        }
    }

    fn internal(e: Error) -> Self {
        tracing::error!(error = %e, "request failed");
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            error: "internal",
            message: e.to_string(),
            parameter: None,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn artifacts(state: &AppState) -> ApiResult<&Artifacts> {
    state.artifacts.as_ref().ok_or_else(ApiError::not_loaded)
}

fn parse_hour(raw: &str) -> ApiResult<u32> {
    raw.trim()
        .parse::<i64>()
        .ok()
        .filter(|h| (0..=23).contains(h))
        .map(|h| h as u32)
        .ok_or_else(|| ApiError::bad_param("hour", format!("{raw:?} is not an hour in 0..=23")))
}

#[derive(Debug, PartialEq)]
struct RecommendationParams {
    hour: u32,
    k: usize,
    epsilon: f64,
}

fn parse_params(
    q: &HashMap<String, String>,
    default_hour: impl FnOnce() -> u32,
) -> ApiResult<RecommendationParams> {
    if let Some(unknown) = q.keys().find(|k| !["hour", "k", "epsilon"].contains(&k.as_str())) {
        return Err(ApiError::bad_param("query", format!("unknown parameter {unknown:?}")));
    }
    let hour = match q.get("hour") {
        Some(h) => parse_hour(h)?,
        None => default_hour(),
    };
    let k = match q.get("k") {
        Some(raw) => raw
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&k| k >= 1)
            .ok_or_else(|| ApiError::bad_param("k", format!("{raw:?} is not an integer >= 1")))?,
        None => DEFAULT_K,
    };
    let epsilon = match q.get("epsilon") {
        Some(raw) => raw
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|e| (0.0..=1.0).contains(e))
            .ok_or_else(|| ApiError::bad_param("epsilon", format!("{raw:?} is not a number in [0, 1]")))?,
        None => 0.0,
    };
    Ok(RecommendationParams { hour, k, epsilon })
}

async fn recommendations(
    State(state): State<Arc<AppState>>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Json<PipelineResult>> {
    let a = artifacts(&state)?;
    let p = parse_params(&q, || (state.current_hour)())?;
    run_pipeline(&a.dataset, &a.model, &a.library, p.hour, p.k, p.epsilon)
        .map(Json)
        .map_err(ApiError::internal)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileResponse {
    pub hour: u32,
    pub support: usize,
    pub fallback: bool,
    pub tags: Vec<TagStrength>,
}

async fn profile(
    State(state): State<Arc<AppState>>,
    UrlPath(raw): UrlPath<String>,
) -> ApiResult<Json<ProfileResponse>> {
    let hour = parse_hour(&raw)?;
    let a = artifacts(&state)?;
    let p = phase1_tag_profile(&a.dataset, hour).map_err(ApiError::internal)?;
    Ok(Json(ProfileResponse {
        hour,
        support: p.support,
        fallback: p.fallback,
        tags: p.top_tags(&a.dataset.vocabulary, PROFILE_TAGS),
    }))
}

async fn feedback(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<StatusCode> {
    let req: FeedbackRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_body(e.to_string()))?;
    if req.session_id.trim().is_empty() {
        return Err(ApiError::bad_param("session_id", "empty"));
    }
    if req.track_key.trim().is_empty() {
        return Err(ApiError::bad_param("track_key", "empty"));
    }
    if let Some(e) = req.epsilon.filter(|e| !(0.0..=1.0).contains(e)) {
        return Err(ApiError::bad_param("epsilon", format!("{e} outside [0, 1]")));
    }
    let event = FeedbackEvent {
        session_id: req.session_id,
        track_key: req.track_key,
        action: req.action,
        at: Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        epsilon_at_time: req.epsilon,
    };
    state.feedback.append(&event).map_err(ApiError::internal)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub dataset_moments: Option<usize>,
    pub model_kind: Option<ModelKind>,
    pub model_rmse: Option<f64>,
}

async fn health(State(state): State<Arc<AppState>>) -> (StatusCode, Json<HealthResponse>) {
    match &state.artifacts {
        Some(a) => (
            StatusCode::OK,
            Json(HealthResponse {
                status: "ok".into(),
                dataset_moments: Some(a.dataset.len()),
                model_kind: Some(a.model.kind()),
                model_rmse: Some(a.model.train_rmse),
            }),
        ),
        None => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(HealthResponse {
                status: "not_loaded".into(),
                dataset_moments: None,
                model_kind: None,
                model_rmse: None,
            }),
        ),
    }
}

pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/recommendations", get(recommendations))
        .route("/api/profile/{hour}", get(profile))
        .route("/api/feedback", post(feedback))
        .route("/api/health", get(health))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until Ctrl-C.
pub async fn serve(state: AppState, addr: SocketAddr, static_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let app = router(Arc::new(state), static_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
