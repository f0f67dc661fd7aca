use std::fmt;
use std::path::Path;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use ecp_core::Error as CoreError;
use serde::Serialize;

/// Failure category shared by the CLI (exit codes) and HTTP (statuses).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad input file, flag or request body.
    Invalid,
    NotFound,
    UnknownId,
    MissingInput,
    Capacity,
    Conflict,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServiceError {
    #[serde(skip)]
    pub kind: Kind,
    pub code: String,
    pub message: String,
    pub detail: serde_json::Value,
}

impl ServiceError {
    pub fn new(kind: Kind, code: &str, message: impl Into<String>) -> Self {
        Self { kind, code: code.into(), message: message.into(), detail: serde_json::Value::Null }
    }

    pub fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(Kind::Invalid, "invalid_request", message)
    }

    pub fn file(path: &Path, err: std::io::Error) -> Self {
        if err.kind() == std::io::ErrorKind::NotFound {
            Self::new(Kind::NotFound, "file_not_found", format!("file not found: {}", path.display()))
        } else {
            Self::new(Kind::Internal, "io_error", format!("{}: {err}", path.display()))
        }
    }

    /// Attaches a file name to parse errors.
    pub fn in_file(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            Kind::Invalid | Kind::NotFound => 2,
            Kind::UnknownId => 3,
            Kind::MissingInput => 4,
            Kind::Capacity => 5,
            Kind::Conflict | Kind::Internal => 1,
        }
    }

    pub fn status(&self) -> StatusCode {
        match self.kind {
            Kind::NotFound | Kind::UnknownId => StatusCode::NOT_FOUND,
            Kind::Invalid | Kind::MissingInput | Kind::Capacity => StatusCode::UNPROCESSABLE_ENTITY,
            Kind::Conflict => StatusCode::CONFLICT,
            Kind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl fmt::Display for ServiceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for ServiceError {}

impl From<CoreError> for ServiceError {
    fn from(e: CoreError) -> Self {
        let message = e.to_string();
        let (kind, code) = match &e {
            CoreError::UnknownLocation(_) => (Kind::UnknownId, "unknown_location"),
            CoreError::UnknownActivity(_) => (Kind::UnknownId, "unknown_activity"),
            CoreError::MissingIndicator(_) => (Kind::MissingInput, "missing_indicator"),
            CoreError::Capacity { .. } => (Kind::Capacity, "capacity"),
            CoreError::Parse { .. } => (Kind::Invalid, "parse_error"),
            CoreError::Disconnected { .. } | CoreError::DegenerateSpectrum { .. } => {
                (Kind::Invalid, "degenerate_matrix")
            }
            CoreError::Infeasible(_) => (Kind::Invalid, "infeasible"),
            CoreError::InvalidPolicy(_) => (Kind::Invalid, "invalid_policy"),
            CoreError::AlreadyActive(_) => (Kind::Invalid, "already_active"),
            _ => (Kind::Invalid, "invalid_input"),
        };
        let detail = match e {
            CoreError::Parse { line, .. } => serde_json::json!({ "line": line }),
            CoreError::Disconnected { components } => serde_json::json!({ "components": components }),
            CoreError::Capacity { inactive, limit } => serde_json::json!({ "inactive": inactive, "limit": limit }),
            _ => serde_json::Value::Null,
        };
        Self { kind, code: code.into(), message, detail }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = crate::render(&self);
        (self.status(), [("content-type", "application/json")], body).into_response()
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;
