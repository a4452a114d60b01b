use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use emr_core::EmrError;
use serde::Serialize;
use serde_json::{json, Value};

/// JSON error body: `{"code", "message", "details"?}`.
///
/// Codes are stable: `unauthenticated`, `auth_failed`, `password_change_required`,
/// `forbidden`, `lab_mismatch`, `not_found`, `bad_request`, `parse_error`,
/// `validation_failed`, `constraint_violation`, `illegal_transition`,
/// `illegal_state`, `version_conflict`, `internal`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Option<Value>,
}

#[derive(Serialize)]
struct Body<'a> {
    code: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    details: Option<&'a Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            details: None,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn unauthenticated() -> Self {
        Self::new(
            StatusCode::UNAUTHORIZED,
            "unauthenticated",
            "missing, unknown or expired bearer token",
        )
    }

    pub fn password_change_required() -> Self {
        Self::new(
            StatusCode::FORBIDDEN,
            "password_change_required",
            "change the initial password via POST /api/password first",
        )
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }
}

impl From<EmrError> for ApiError {
    fn from(e: EmrError) -> Self {
        let message = e.to_string();
        match e {
            EmrError::AuthorizationDenied { .. } => {
                Self::new(StatusCode::FORBIDDEN, "forbidden", message)
            }
            EmrError::AuthFailure => Self::new(
                StatusCode::UNAUTHORIZED,
                "auth_failed",
                "invalid username or password",
            ),
            EmrError::LabMismatch { .. } => {
                Self::new(StatusCode::FORBIDDEN, "lab_mismatch", message)
            }
            EmrError::NotFound { .. } => Self::not_found(message),
            EmrError::Validation(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation_failed", message)
            }
            EmrError::ConstraintViolation(v) => Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "constraint_violation",
                message,
            )
            .with_details(serde_json::to_value(v).unwrap_or(Value::Null)),
            EmrError::IllegalTransition { from, event } => {
                Self::new(StatusCode::CONFLICT, "illegal_transition", message).with_details(
                    json!({ "from": from, "event": event }),
                )
            }
            EmrError::IllegalState(_) => Self::new(StatusCode::CONFLICT, "illegal_state", message),
            EmrError::VersionConflict(_) => {
                Self::new(StatusCode::CONFLICT, "version_conflict", message)
            }
            EmrError::Parse(p) => Self::new(StatusCode::BAD_REQUEST, "parse_error", message)
                .with_details(json!({ "line": p.line, "column": p.column })),
            EmrError::Store(_) => Self::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "internal",
                "internal storage error",
            ),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body {
            code: self.code,
            message: &self.message,
            details: self.details.as_ref(),
        };
        (self.status, Json(body)).into_response()
    }
}
