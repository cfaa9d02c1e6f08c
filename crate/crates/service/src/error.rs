use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use harvest_core::rag::{RagError, Stage};
use serde::{Deserialize, Serialize};

/// Wire shape of every error response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                stage: None,
            },
        }
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn no_index() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "index_not_loaded", "no index is loaded; POST /v1/ingest first")
    }

    fn with_stage(mut self, stage: Option<Stage>) -> Self {
        self.body.stage = stage;
        self
    }
}

impl From<RagError> for ApiError {
    fn from(e: RagError) -> Self {
        let stage = e.stage();
        let message = e.to_string();
        let error = match &e {
            RagError::EmptyQuery => Self::bad_request("empty_query", message),
            RagError::QueryTooLong { .. } => Self::bad_request("query_too_long", message),
            RagError::InvalidParams(_) => Self::bad_request("invalid_params", message),
            _ if e.is_provider_failure() => Self::new(StatusCode::SERVICE_UNAVAILABLE, "provider_failure", message),
            _ => Self::internal(message),
        };
        error.with_stage(stage)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rejection: JsonRejection) -> Self {
        let message = rejection.body_text();
        if rejection.status() == StatusCode::PAYLOAD_TOO_LARGE {
            return Self::new(StatusCode::PAYLOAD_TOO_LARGE, "body_too_large", message);
        }
        match rejection {
            JsonRejection::MissingJsonContentType(_) => {
                Self::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, "unsupported_media_type", message)
            }
            _ => Self::bad_request("invalid_json", message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use harvest_core::embedding::EmbeddingError;

    #[test]
    fn provider_failures_carry_their_stage() {
        let e: ApiError = RagError::Embed(EmbeddingError::Provider {
            provider_id: "remote".into(),
            status: Some(502),
            retryable: true,
            message: "bad gateway".into(),
        })
        .into();
        assert_eq!(e.status, StatusCode::SERVICE_UNAVAILABLE);
        assert_eq!(e.body.code, "provider_failure");
        assert_eq!(e.body.stage, Some(Stage::Embed));
        let json = serde_json::to_value(&e.body).unwrap();
        assert_eq!(json["stage"], "embed");
    }

    #[test]
    fn validation_errors_omit_stage() {
        let e: ApiError = RagError::EmptyQuery.into();
        assert_eq!(e.status, StatusCode::BAD_REQUEST);
        let json = serde_json::to_value(&e.body).unwrap();
        assert_eq!(json, serde_json::json!({"code": "empty_query", "message": "query is empty"}));
    }
}
