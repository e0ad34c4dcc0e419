use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use radeval_core::workflow::WorkflowError;
use serde::{Deserialize, Serialize};

use crate::auth::AuthError;

/// Wire shape of every error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub field: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { code: code.into(), field: None, message: message.into() } }
    }

    pub fn with_field(mut self, field: impl Into<String>) -> Self {
        self.body.field = Some(field.into());
        self
    }

    pub fn unauthorized(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", message)
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", message)
    }

    pub fn not_found(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<AuthError> for ApiError {
    fn from(e: AuthError) -> Self {
        match e {
            AuthError::Expired => ApiError::new(StatusCode::UNAUTHORIZED, "token_expired", e.to_string()),
            _ => ApiError::unauthorized(e.to_string()),
        }
    }
}

impl From<WorkflowError> for ApiError {
    fn from(e: WorkflowError) -> Self {
        let message = e.to_string();
        match e {
            WorkflowError::UnknownTask(_) => ApiError::not_found("unknown_task", message).with_field("task_id"),
            WorkflowError::UnknownRater(_) => ApiError::unauthorized(message),
            WorkflowError::Unassigned { .. } => ApiError::forbidden(message).with_field("task_id"),
            WorkflowError::WrongKind { .. } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message).with_field("kind")
            }
            WorkflowError::Conflict { .. } => ApiError::new(StatusCode::CONFLICT, "conflict", message),
            WorkflowError::Validation { field, message } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message).with_field(field)
            }
            _ => ApiError::internal(message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
