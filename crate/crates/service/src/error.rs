use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use nucleus_core::session::SessionError;
use nucleus_core::ThresholdError;
use serde::Serialize;

/// Error body returned by every endpoint: `{"code": ..., "message": ...}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ApiError {
    pub code: &'static str,
    pub message: String,
    #[serde(skip)]
    pub status: StatusCode,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: String) -> Self {
        Self { code, message, status }
    }

    pub fn not_found(message: String) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn invalid_param(message: String) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_param", message)
    }

    pub fn io(message: String) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "io_error", message)
    }

    /// Reclassifies a conflict as `degenerate_image`, used where the request
    /// only reads.
    pub(crate) fn degenerate(self) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "degenerate_image", self.message)
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let message = e.to_string();
        match e {
            SessionError::UnknownImage(_) => Self::not_found(message),
            SessionError::Degenerate { .. } => Self::new(StatusCode::CONFLICT, "conflict", message),
            SessionError::Threshold(ThresholdError::InvalidAlpha(_)) => Self::invalid_param(message),
            _ => Self::io(message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}
