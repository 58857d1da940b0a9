use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use crate::session::SessionState;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("session {0} not found")]
    NotFound(String),
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("pending query is point {pending}, got a label for point {submitted}")]
    QueryMismatch { pending: usize, submitted: usize },
    #[error("operation not allowed while the session is {0}")]
    InvalidState(SessionState),
    #[error("no query pending: the session is {0}")]
    NoQuery(SessionState),
    #[error("session has not been finalized")]
    NotFinalized,
    #[error("leave-one-out selection needs at least 2 labels per class, have {zeros} of class 0 and {ones} of class 1")]
    Infeasible { zeros: usize, ones: usize },
    #[error(transparent)]
    Core(#[from] palms_core::Error),
    #[error("event log: {0}")]
    Log(#[from] std::io::Error),
}

#[derive(Serialize)]
struct ErrorBody {
    code: &'static str,
    message: String,
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::QueryMismatch { .. } => "query_mismatch",
            ServiceError::InvalidState(_) => "invalid_state",
            ServiceError::NoQuery(_) => "no_query",
            ServiceError::NotFinalized => "not_finalized",
            ServiceError::Infeasible { .. } => "loocv_infeasible",
            ServiceError::Core(e) => match e.kind() {
                palms_core::ErrorKind::Numerical => "numerical",
                palms_core::ErrorKind::Io => "io",
                palms_core::ErrorKind::Data => "data",
            },
            ServiceError::Log(_) => "io",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) | ServiceError::NoQuery(_) | ServiceError::NotFinalized => StatusCode::NOT_FOUND,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::QueryMismatch { .. } | ServiceError::InvalidState(_) => StatusCode::CONFLICT,
            ServiceError::Infeasible { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Core(e) => match e.kind() {
                palms_core::ErrorKind::Data => StatusCode::BAD_REQUEST,
                _ => StatusCode::INTERNAL_SERVER_ERROR,
            },
            ServiceError::Log(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}

pub type ServiceResult<T> = std::result::Result<T, ServiceError>;
