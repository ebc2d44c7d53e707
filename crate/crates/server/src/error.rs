//! JSON error bodies and status codes.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use proofdesk_core::telemetry::TelemetryError;
use proofdesk_core::workspace::WorkspaceError;
use serde::{Deserialize, Serialize};

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or unknown token")
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not-found", message)
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad-request", message)
    }
}

impl From<WorkspaceError> for ApiError {
    fn from(e: WorkspaceError) -> Self {
        use StatusCode as S;
        let (status, code) = match &e {
            WorkspaceError::BadCredentials => (S::UNAUTHORIZED, "bad-credentials"),
            WorkspaceError::PermissionDenied(_) => (S::FORBIDDEN, "forbidden"),
            WorkspaceError::NotFound(_) => (S::NOT_FOUND, "not-found"),
            WorkspaceError::UnknownActivity(_) => (S::NOT_FOUND, "unknown-activity"),
            WorkspaceError::NameInvalid(_) => (S::UNPROCESSABLE_ENTITY, "name-invalid"),
            WorkspaceError::QuotaExceeded(_) => (S::PAYLOAD_TOO_LARGE, "quota-exceeded"),
            WorkspaceError::Conflict(_) => (S::CONFLICT, "conflict"),
            WorkspaceError::Config(_) => (S::UNPROCESSABLE_ENTITY, "invalid-config"),
            WorkspaceError::Archive(_) => (S::BAD_REQUEST, "invalid-archive"),
            WorkspaceError::Telemetry(TelemetryError::StorageFull) => {
                (S::INSUFFICIENT_STORAGE, "storage-full")
            }
            WorkspaceError::Telemetry(TelemetryError::Import(_) | TelemetryError::Invalid(_)) => {
                (S::BAD_REQUEST, "invalid-events")
            }
            WorkspaceError::Telemetry(_) | WorkspaceError::Store(_) | WorkspaceError::Io(_) => {
                (S::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        if status == S::INTERNAL_SERVER_ERROR {
            tracing::error!(error = %e, "request failed");
        }
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code.to_owned(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
