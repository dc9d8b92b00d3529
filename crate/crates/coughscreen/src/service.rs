//! HTTP API over the screening engine and the record store.
//!
//! ```text
//! POST /v1/screen           raw audio/wav or multipart; X-Coarse-Lat/Lon
//! POST /v1/screen/session   multipart with three or more clips
//! GET  /v1/records?from=&to=&page=&per_page=
//! GET  /v1/health
//! ```

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use coughscreen_core::audio::AudioError;
use coughscreen_core::classifiers::{BinaryLabel, DetectionLabel, DiagnosisLabel};
use coughscreen_core::mediator::{self, AppResult, MIN_SESSION_SAMPLES};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::config::ServiceConfig;
use crate::engine::{Engine, EngineError, ModelVersions, Screening};
use crate::records::{CoarseLocation, RecordQuery, RecordStore, ScreeningRecord, StoreError};
use crate::wav::WavError;

/// Most clips accepted in one session request.
pub const MAX_SESSION_CLIPS: usize = 10;

#[derive(Clone)]
pub struct AppState {
    /// `None` when models failed to load; screening then answers 503.
    pub engine: Option<Arc<Engine>>,
    pub store: Arc<dyn RecordStore>,
    pub payload_limit: usize,
    pub research_audio_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub enum ApiError {
    MalformedAudio(String),
    PayloadTooLarge { limit: usize },
    ValidationFailed(String),
    InsufficientValidCoughs { valid: usize, needed: usize },
    BadRequest(String),
    ModelsNotLoaded,
    StoreUnavailable(String),
    Internal(String),
}

impl ApiError {
    fn parts(&self) -> (StatusCode, &'static str, String) {
        match self {
            ApiError::MalformedAudio(m) => (StatusCode::BAD_REQUEST, "malformed_audio", m.clone()),
            ApiError::PayloadTooLarge { limit } => {
                (StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", format!("payload exceeds {limit} bytes"))
            }
            ApiError::ValidationFailed(m) => (StatusCode::UNPROCESSABLE_ENTITY, "validation_failed", m.clone()),
            ApiError::InsufficientValidCoughs { valid, needed } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                "insufficient_valid_coughs",
                format!("{valid} valid coughs, at least {needed} needed"),
            ),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "bad_request", m.clone()),
            ApiError::ModelsNotLoaded => {
                (StatusCode::SERVICE_UNAVAILABLE, "models_not_loaded", "models are not loaded".into())
            }
            ApiError::StoreUnavailable(m) => (StatusCode::SERVICE_UNAVAILABLE, "store_unavailable", m.clone()),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", m.clone()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, message) = self.parts();
        let mut body = json!({ "error": code, "message": message });
        if let ApiError::InsufficientValidCoughs { valid, .. } = self {
            body["valid_coughs"] = json!(valid);
        }
        (status, Json(body)).into_response()
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::MalformedAudio(w) => ApiError::MalformedAudio(w.to_string()),
            EngineError::Validation(AudioError::EmptyPayload) => ApiError::MalformedAudio("empty payload".into()),
            EngineError::Validation(v) => ApiError::ValidationFailed(v.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::StoreUnavailable(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierView {
    pub dtl_mc: DiagnosisLabel,
    pub cml_mc: DiagnosisLabel,
    pub dtl_bc: BinaryLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreenResponse {
    pub result: AppResult,
    pub prompt_rerecord: bool,
    pub detection: DetectionLabel,
    pub classifiers: Option<ClassifierView>,
    pub record_id: Option<String>,
    pub model_versions: ModelVersions,
}

impl ScreenResponse {
    pub fn new(s: &Screening, record_id: Option<String>, versions: &ModelVersions) -> Self {
        Self {
            result: s.result,
            prompt_rerecord: s.prompt_rerecord,
            detection: s.detection,
            classifiers: s.classifiers.map(|c| ClassifierView { dtl_mc: c.k1, cml_mc: c.k2, dtl_bc: c.k3 }),
            record_id,
            model_versions: versions.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionResponse {
    pub result: AppResult,
    pub prompt_rerecord: bool,
    pub classifiers: Option<ClassifierView>,
    /// The session id; every per-clip record carries it.
    pub record_id: String,
    pub valid_coughs: usize,
    pub clips: Vec<ScreenResponse>,
    pub model_versions: ModelVersions,
}

pub fn router(state: AppState, cors_origin: &str) -> Router {
    let origin = if cors_origin == "*" {
        AllowOrigin::from(Any)
    } else {
        AllowOrigin::exact(HeaderValue::from_str(cors_origin).unwrap_or(HeaderValue::from_static("null")))
    };
    let cors = CorsLayer::new().allow_origin(origin).allow_methods(Any).allow_headers(Any);
    let body_cap = state.payload_limit.saturating_mul(MAX_SESSION_CLIPS);
    Router::new()
        .route("/v1/screen", post(screen))
        .route("/v1/screen/session", post(screen_session))
        .route("/v1/records", get(list_records))
        .route("/v1/health", get(health))
        .layer(DefaultBodyLimit::max(body_cap))
        .layer(cors)
        .with_state(state)
}

fn coarse_location(headers: &HeaderMap) -> Result<Option<CoarseLocation>, ApiError> {
    let read = |name: &str| -> Result<Option<f64>, ApiError> {
        headers
            .get(name)
            .map(|v| {
                v.to_str()
                    .ok()
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| ApiError::BadRequest(format!("{name} is not a number")))
            })
            .transpose()
    };
    match (read("x-coarse-lat")?, read("x-coarse-lon")?) {
        (None, None) => Ok(None),
        (Some(lat), Some(lon)) => CoarseLocation::new(lat, lon)
            .map(Some)
            .ok_or_else(|| ApiError::BadRequest("coarse location out of range".into())),
        _ => Err(ApiError::BadRequest("X-Coarse-Lat and X-Coarse-Lon must be sent together".into())),
    }
}

fn is_multipart(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"))
}

/// Audio payloads of a request: the raw body, or every part of a
/// multipart body.
async fn audio_parts(req: Request, limit: usize, max_parts: usize) -> Result<Vec<Bytes>, ApiError> {
    if !is_multipart(req.headers()) {
        let body =
            axum::body::to_bytes(req.into_body(), limit).await.map_err(|_| ApiError::PayloadTooLarge { limit })?;
        return Ok(vec![body]);
    }
    let mut multipart = Multipart::from_request(req, &()).await.map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let mut parts = Vec::new();
    loop {
        let field = match multipart.next_field().await {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) if e.status() == StatusCode::PAYLOAD_TOO_LARGE => {
                return Err(ApiError::PayloadTooLarge { limit: limit * max_parts })
            }
            Err(e) => return Err(ApiError::BadRequest(e.body_text())),
        };
        let bytes = field.bytes().await.map_err(|e| {
            if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
                ApiError::PayloadTooLarge { limit: limit * max_parts }
            } else {
                ApiError::BadRequest(e.body_text())
            }
        })?;
        if bytes.len() > limit {
            return Err(ApiError::PayloadTooLarge { limit });
        }
        if parts.len() == max_parts {
            return Err(ApiError::BadRequest(format!("at most {max_parts} clips per request")));
        }
        parts.push(bytes);
    }
    Ok(parts)
}

fn engine(state: &AppState) -> Result<Arc<Engine>, ApiError> {
    state.engine.clone().ok_or(ApiError::ModelsNotLoaded)
}

async fn run_screen(engine: Arc<Engine>, bytes: Bytes) -> Result<Screening, ApiError> {
    if bytes.is_empty() {
        return Err(ApiError::MalformedAudio(WavError::EmptyPayload.to_string()));
    }
    tokio::task::spawn_blocking(move || engine.screen_wav(&bytes))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(ApiError::from)
}

/// Appends the record (synced to disk) before the caller responds.
async fn persist(state: &AppState, record: ScreeningRecord, audio: Option<Bytes>) -> Result<String, ApiError> {
    let store = state.store.clone();
    let research = state.research_audio_dir.clone();
    tokio::task::spawn_blocking(move || -> Result<String, ApiError> {
        store.append(&record)?;
        if let (Some(dir), Some(audio)) = (research, audio) {
            std::fs::create_dir_all(&dir)
                .and_then(|_| std::fs::write(dir.join(format!("{}.wav", record.record_id)), &audio))
                .map_err(|e| ApiError::StoreUnavailable(e.to_string()))?;
        }
        Ok(record.record_id)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn screen(State(state): State<AppState>, req: Request) -> Result<Json<ScreenResponse>, ApiError> {
    let engine = engine(&state)?;
    let location = coarse_location(req.headers())?;
    let mut parts = audio_parts(req, state.payload_limit, 1).await?;
    let bytes = parts.pop().unwrap_or_default();
    let screening = run_screen(engine.clone(), bytes.clone()).await?;
    let versions = engine.versions();
    let record_id = match ScreeningRecord::from_screening(&screening, versions, location, None) {
        Some(rec) => Some(persist(&state, rec, Some(bytes)).await?),
        None => None,
    };
    Ok(Json(ScreenResponse::new(&screening, record_id, versions)))
}

async fn screen_session(State(state): State<AppState>, req: Request) -> Result<Json<SessionResponse>, ApiError> {
    let engine = engine(&state)?;
    let location = coarse_location(req.headers())?;
    let parts = audio_parts(req, state.payload_limit, MAX_SESSION_CLIPS).await?;
    let mut screenings = Vec::with_capacity(parts.len());
    for bytes in &parts {
        match run_screen(engine.clone(), bytes.clone()).await {
            Ok(s) => screenings.push(Some(s)),
            // too short or silent clips count as rejected, like non-coughs
            Err(ApiError::ValidationFailed(_)) => screenings.push(None),
            Err(e) => return Err(e),
        }
    }
    let valid: Vec<AppResult> =
        screenings.iter().flatten().filter(|s| s.classifiers.is_some()).map(|s| s.result).collect();
    if valid.len() < MIN_SESSION_SAMPLES {
        return Err(ApiError::InsufficientValidCoughs { valid: valid.len(), needed: MIN_SESSION_SAMPLES });
    }
    let result = mediator::multi_sample_vote(&valid).map_err(|e| ApiError::Internal(e.to_string()))?;
    let session_id = uuid::Uuid::new_v4().simple().to_string();
    let versions = engine.versions();
    let mut clips = Vec::new();
    for (s, bytes) in screenings.iter().zip(&parts) {
        let Some(s) = s else { continue };
        let record_id = match ScreeningRecord::from_screening(s, versions, location, Some(session_id.clone())) {
            Some(rec) => Some(persist(&state, rec, Some(bytes.clone())).await?),
            None => None,
        };
        clips.push(ScreenResponse::new(s, record_id, versions));
    }
    Ok(Json(SessionResponse {
        result,
        prompt_rerecord: false,
        classifiers: None,
        record_id: session_id,
        valid_coughs: valid.len(),
        clips,
        model_versions: versions.clone(),
    }))
}

#[derive(Debug, Default, Deserialize)]
pub struct RecordParams {
    pub from: Option<String>,
    pub to: Option<String>,
    pub page: Option<usize>,
    pub per_page: Option<usize>,
}

fn parse_time(name: &str, v: Option<&str>) -> Result<Option<DateTime<Utc>>, ApiError> {
    v.filter(|s| !s.is_empty())
        .map(|s| {
            DateTime::parse_from_rfc3339(s)
                .map(|t| t.with_timezone(&Utc))
                .map_err(|e| ApiError::BadRequest(format!("{name}: {e}")))
        })
        .transpose()
}

async fn list_records(
    State(state): State<AppState>,
    Query(params): Query<RecordParams>,
) -> Result<Json<crate::records::RecordPage>, ApiError> {
    let query = RecordQuery {
        from: parse_time("from", params.from.as_deref())?,
        to: parse_time("to", params.to.as_deref())?,
        page: params.page.unwrap_or(0),
        per_page: params.per_page.unwrap_or(50).clamp(1, 500),
    };
    let store = state.store.clone();
    let page = tokio::task::spawn_blocking(move || store.list(&query))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(Json(page))
}

async fn health(State(state): State<AppState>) -> Response {
    let store = state.store.status();
    match &state.engine {
        Some(engine) if store.ok => {
            Json(json!({ "status": "ok", "versions": engine.versions(), "store": store })).into_response()
        }
        Some(engine) => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({ "status": "store_unavailable", "versions": engine.versions(), "store": store })),
        )
            .into_response(),
        None => (StatusCode::SERVICE_UNAVAILABLE, Json(json!({ "status": "models_not_loaded", "store": store })))
            .into_response(),
    }
}

/// Loads models and the store per `cfg` and serves until Ctrl-C.
pub async fn serve(cfg: &ServiceConfig, preprocessor: crate::pipeline::Preprocessor) -> anyhow::Result<()> {
    let engine = match crate::engine::Models::load_dir(&cfg.models_dir) {
        Ok(models) => Some(Arc::new(Engine::new(models, preprocessor))),
        Err(e) => {
            tracing::error!("models not loaded from {}: {e}", cfg.models_dir.display());
            None
        }
    };
    let store = Arc::new(crate::records::JsonlStore::open(&cfg.store_dir, cfg.index_every)?);
    let state = AppState {
        engine,
        store,
        payload_limit: cfg.payload_limit,
        research_audio_dir: cfg.research_audio_dir.clone(),
    };
    let app = router(state, &cfg.cors_origin);
    let listener = tokio::net::TcpListener::bind(cfg.bind).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
