use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use delib_core::dialogue::Phase;
use delib_core::session::{SessionError, StoreError};

/// Error response body: `{code, message, phase}`.
#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub phase: Option<Phase>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>, phase: Option<Phase>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
                phase,
            },
        }
    }

    pub fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_session", format!("unknown session: {id}"), None)
    }

    pub fn bad_request(message: impl Into<String>, phase: Option<Phase>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message, phase)
    }

    pub fn session(err: &SessionError, phase: Option<Phase>) -> Self {
        let code = err.code();
        let status = match code {
            "unknown_case" => StatusCode::NOT_FOUND,
            "wrong_phase" | "illegal_event" | "not_discussed" | "already_decided" => StatusCode::CONFLICT,
            "invalid_opinions" | "empty_message" | "unknown_dimension" => StatusCode::BAD_REQUEST,
            "llm_failure" => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, code, err.to_string(), phase)
    }

    pub fn store(err: &StoreError) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_failure", err.to_string(), None)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
