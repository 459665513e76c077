use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{message}")]
    BadRequest { message: String, field: Option<String> },

    #[error("no scene with id `{0}`")]
    NotFound(String),

    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn bad(message: impl Into<String>) -> Self {
        ApiError::BadRequest {
            message: message.into(),
            field: None,
        }
    }

    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError::BadRequest {
            message: message.into(),
            field: Some(field.into()),
        }
    }

    /// Maps a core error raised while handling `field`; range violations name the nested
    /// parameter, as in `edits.white_balance[0]`.
    pub fn from_core(field: &str, e: ic_core::Error) -> Self {
        match &e {
            ic_core::Error::OutOfRange { field: inner, .. } => Self::field(format!("{field}.{inner}"), e.to_string()),
            ic_core::Error::Io(_) | ic_core::Error::Refiner(_) => ApiError::Internal(e.to_string()),
            _ => Self::field(field, e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, field) = match &self {
            ApiError::BadRequest { field, .. } => (StatusCode::BAD_REQUEST, field.clone()),
            ApiError::NotFound(_) => (StatusCode::NOT_FOUND, None),
            ApiError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, None),
        };
        let body = match field {
            Some(f) => json!({ "error": self.to_string(), "field": f }),
            None => json!({ "error": self.to_string() }),
        };
        (status, Json(body)).into_response()
    }
}
