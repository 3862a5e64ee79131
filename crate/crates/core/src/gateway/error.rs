use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use crate::backends::BackendError;
use crate::persistence::PersistenceError;
use crate::pipeline::PipelineError;
use crate::translation::TranslationError;

/// Every error code the API can return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    InvalidRequest,
    EmptyText,
    UnsupportedDirection,
    UnknownBackend,
    UnsupportedCapability,
    ShapeMismatch,
    Unauthenticated,
    InvalidCredentials,
    Forbidden,
    NotFound,
    EmailTaken,
    InputTooLarge,
    BackendUnavailable,
    InvalidBackendResponse,
    StorageFailure,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 16] = [
        ErrorCode::InvalidRequest,
        ErrorCode::EmptyText,
        ErrorCode::UnsupportedDirection,
        ErrorCode::UnknownBackend,
        ErrorCode::UnsupportedCapability,
        ErrorCode::ShapeMismatch,
        ErrorCode::Unauthenticated,
        ErrorCode::InvalidCredentials,
        ErrorCode::Forbidden,
        ErrorCode::NotFound,
        ErrorCode::EmailTaken,
        ErrorCode::InputTooLarge,
        ErrorCode::BackendUnavailable,
        ErrorCode::InvalidBackendResponse,
        ErrorCode::StorageFailure,
        ErrorCode::Internal,
    ];

    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::InvalidRequest
            | ErrorCode::EmptyText
            | ErrorCode::UnsupportedDirection
            | ErrorCode::UnknownBackend
            | ErrorCode::UnsupportedCapability
            | ErrorCode::ShapeMismatch => StatusCode::BAD_REQUEST,
            ErrorCode::Unauthenticated | ErrorCode::InvalidCredentials => StatusCode::UNAUTHORIZED,
            ErrorCode::Forbidden => StatusCode::FORBIDDEN,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::EmailTaken => StatusCode::CONFLICT,
            ErrorCode::InputTooLarge => StatusCode::PAYLOAD_TOO_LARGE,
            ErrorCode::BackendUnavailable | ErrorCode::InvalidBackendResponse => StatusCode::BAD_GATEWAY,
            ErrorCode::StorageFailure | ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
        }
    }

    pub fn status(&self) -> StatusCode {
        self.code.status()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}

impl From<BackendError> for ApiError {
    fn from(e: BackendError) -> Self {
        let code = match &e {
            BackendError::Unavailable(_) | BackendError::StreamTruncated => ErrorCode::BackendUnavailable,
            BackendError::InvalidResponse(_) => ErrorCode::InvalidBackendResponse,
            BackendError::Unsupported { .. } => ErrorCode::UnsupportedCapability,
            BackendError::InvalidInput(_) => ErrorCode::InvalidRequest,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<TranslationError> for ApiError {
    fn from(e: TranslationError) -> Self {
        let code = match &e {
            TranslationError::UnsupportedDirection { .. } => ErrorCode::UnsupportedDirection,
            TranslationError::EmptyText => ErrorCode::EmptyText,
            TranslationError::StreamTruncated => ErrorCode::BackendUnavailable,
            TranslationError::DeltaAfterDone | TranslationError::InvalidTransition { .. } => {
                ErrorCode::InvalidBackendResponse
            }
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::EmptyText => ApiError::new(ErrorCode::EmptyText, e.to_string()),
            PipelineError::InputTooLarge { .. } => ApiError::new(ErrorCode::InputTooLarge, e.to_string()),
            PipelineError::UnknownBackend(_) => ApiError::new(ErrorCode::UnknownBackend, e.to_string()),
            PipelineError::Backend(e) => e.into(),
            // labels came from the backend, so a label error is the backend's fault
            PipelineError::Punctuation(e) => ApiError::new(ErrorCode::InvalidBackendResponse, e.to_string()),
            PipelineError::Translation(e) => e.into(),
        }
    }
}

impl From<PersistenceError> for ApiError {
    fn from(e: PersistenceError) -> Self {
        let code = match &e {
            PersistenceError::NotFound => ErrorCode::NotFound,
            PersistenceError::Forbidden => ErrorCode::Forbidden,
            PersistenceError::ShapeMismatch(_) => ErrorCode::ShapeMismatch,
            PersistenceError::EmailTaken => ErrorCode::EmailTaken,
            PersistenceError::InvalidCredentials => ErrorCode::InvalidCredentials,
            PersistenceError::Unauthenticated => ErrorCode::Unauthenticated,
            PersistenceError::InvalidInput(_) => ErrorCode::InvalidRequest,
            PersistenceError::Storage(_) => ErrorCode::StorageFailure,
        };
        ApiError::new(code, e.to_string())
    }
}
