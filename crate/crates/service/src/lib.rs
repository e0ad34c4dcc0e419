//! JSON-over-HTTP interface to the blinded rating workflow.
//!
//! | route | auth |
//! |---|---|
//! | `POST /v1/session` | rater access code |
//! | `GET /v1/tasks/next` | session token |
//! | `POST /v1/responses` | session token |
//! | `GET /v1/cases/{id}/image` | session token, rater assigned to the case |
//! | `GET /v1/admin/progress` | admin token |
//!
//! Errors are `{code, field, message}` bodies.

pub mod auth;
pub mod config;
pub mod error;
pub mod images;
pub mod wire;

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{Duration, Utc};
use parking_lot::RwLock;
use radeval_core::text::sha256_hex;
use radeval_core::workflow::{Workflow, WorkflowError};
use serde::de::DeserializeOwned;

pub use auth::{AuthError, SessionKeys, SessionToken};
pub use config::{ConfigError, ServiceConfig};
pub use error::{ApiError, ErrorBody};
pub use images::{ImageError, ImageStore};
pub use wire::{NextTask, Progress, ReportView, SessionRequest, SubmitAck, Submission, TaskPayload, API_SCHEMA};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shared handler state. Reads take the workflow lock shared; submissions
/// take it exclusively, so log appends are serialized.
#[derive(Debug)]
pub struct AppState {
    pub workflow: RwLock<Workflow>,
    pub images: ImageStore,
    pub keys: SessionKeys,
    admin_digest: Option<String>,
}

impl AppState {
    pub fn new(workflow: Workflow, images: ImageStore, keys: SessionKeys, admin_token: Option<&str>) -> Self {
        AppState { workflow: RwLock::new(workflow), images, keys, admin_digest: admin_token.map(sha256_hex) }
    }

    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServiceError> {
        std::fs::create_dir_all(&config.data_dir)?;
        let workflow = Workflow::open(&config.log_path())?;
        let images = ImageStore::open(&config.images_dir())?;
        let ttl = Duration::seconds(i64::try_from(config.session_ttl_secs).unwrap_or(i64::MAX / 1000));
        let keys = match &config.session_secret {
            Some(secret) => SessionKeys::new(secret, ttl),
            None => SessionKeys::random(ttl),
        };
        Ok(AppState::new(workflow, images, keys, config.admin_token.as_deref()))
    }

    fn rater(&self, headers: &HeaderMap) -> Result<String, ApiError> {
        let rater_id = self.keys.verify(bearer(headers)?, Utc::now())?;
        if !self.workflow.read().state().raters.contains_key(&rater_id) {
            return Err(ApiError::unauthorized(format!("unknown rater {rater_id}")));
        }
        Ok(rater_id)
    }

    fn admin(&self, headers: &HeaderMap) -> Result<(), ApiError> {
        let Some(expected) = &self.admin_digest else {
            return Err(ApiError::forbidden("admin endpoints are disabled"));
        };
        if sha256_hex(bearer(headers)?) != *expected {
            return Err(ApiError::unauthorized("bad admin token"));
        }
        Ok(())
    }
}

fn bearer(headers: &HeaderMap) -> Result<&str, ApiError> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .ok_or_else(|| ApiError::unauthorized("missing bearer token"))
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_json", e.to_string()))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/session", post(create_session))
        .route("/v1/tasks/next", get(next_task))
        .route("/v1/responses", post(submit_response))
        .route("/v1/cases/{id}/image", get(fetch_image))
        .route("/v1/admin/progress", get(progress))
        .with_state(state)
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> Result<Json<SessionToken>, ApiError> {
    let req: SessionRequest = parse_body(&body)?;
    if !app.keys.check_access_code(&req.rater_id, &req.access_code) {
        return Err(ApiError::unauthorized("bad access code").with_field("access_code"));
    }
    if !app.workflow.read().state().raters.contains_key(&req.rater_id) {
        return Err(ApiError::unauthorized(format!("unknown rater {}", req.rater_id)).with_field("rater_id"));
    }
    Ok(Json(app.keys.issue(&req.rater_id, Utc::now())))
}

async fn next_task(State(app): State<Arc<AppState>>, headers: HeaderMap) -> Result<Json<NextTask>, ApiError> {
    let rater_id = app.rater(&headers)?;
    let wf = app.workflow.read();
    match wf.next_task(&rater_id) {
        None => Ok(Json(NextTask::Done)),
        Some(task) => TaskPayload::from_task(task, wf.state())
            .map(|task| Json(NextTask::Task { task }))
            .ok_or_else(|| ApiError::internal(format!("task {} references a missing report", task.task_id()))),
    }
}

async fn submit_response(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<SubmitAck>, ApiError> {
    let rater_id = app.rater(&headers)?;
    let submission: Submission = parse_body(&body)?;
    let response = submission.into_response(&rater_id, Utc::now());
    let seq = app.workflow.write().record_response(response)?;
    tracing::debug!(rater_id, seq, "response recorded");
    Ok(Json(SubmitAck { seq }))
}

async fn fetch_image(
    State(app): State<Arc<AppState>>,
    Path(case_id): Path<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let rater_id = app.rater(&headers)?;
    if !app.workflow.read().state().rater_sees_case(&rater_id, &case_id) {
        return Err(ApiError::forbidden(format!("case {case_id} is not assigned to {rater_id}")));
    }
    let Some(digest) = app.images.digest(&case_id) else {
        return Err(ApiError::not_found("image_missing", format!("no image for case {case_id}")));
    };
    let etag = format!("\"{digest}\"");
    let cache = [
        (header::ETAG, HeaderValue::from_str(&etag).expect("hex etag")),
        (header::CACHE_CONTROL, HeaderValue::from_static("private, max-age=31536000, immutable")),
    ];
    let matches = headers
        .get(header::IF_NONE_MATCH)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.split(',').any(|t| t.trim() == etag || t.trim() == "*"));
    if matches {
        return Ok((StatusCode::NOT_MODIFIED, cache).into_response());
    }
    let (_, bytes) = app
        .images
        .read(&case_id)
        .map_err(|e| ApiError::internal(e.to_string()))?
        .ok_or_else(|| ApiError::not_found("image_missing", format!("no image for case {case_id}")))?;
    Ok((StatusCode::OK, [(header::CONTENT_TYPE, HeaderValue::from_static("image/png"))], cache, bytes).into_response())
}

async fn progress(State(app): State<Arc<AppState>>, headers: HeaderMap) -> Result<Json<Progress>, ApiError> {
    app.admin(&headers)?;
    Ok(Json(Progress::of(app.workflow.read().state())))
}

/// Binds `config.listen` and serves until `shutdown` resolves.
pub async fn serve(
    config: &ServiceConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let app = Arc::new(AppState::from_config(config)?);
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(app)).with_graceful_shutdown(shutdown).await?;
    Ok(())
}
