use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use dialenv_core::DialogueError;
use thiserror::Error;

use crate::wire::FrameBody;

/// A refused request. Serialized as an error frame body so HTTP clients and
/// stream clients see the same shape.
#[derive(Clone, Debug, Error, PartialEq)]
#[error("{message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub retriable: bool,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            retriable: false,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    pub fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "invalid or stale token")
    }

    pub fn not_found(what: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no such session: {what}"))
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, message)
    }

    pub fn frame(&self) -> FrameBody {
        FrameBody::Error {
            message: self.message.clone(),
            retriable: self.retriable,
        }
    }
}

impl From<DialogueError> for ApiError {
    fn from(e: DialogueError) -> Self {
        let status = match e {
            DialogueError::NotYourTurn { .. } | DialogueError::SessionOver => StatusCode::CONFLICT,
            DialogueError::UnknownActor(_) => StatusCode::FORBIDDEN,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError {
            status,
            retriable: e.is_retriable(),
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.frame())).into_response()
    }
}
