//! HTTP front end of the session service.
//!
//! | method | path                          | body                       |
//! |--------|-------------------------------|----------------------------|
//! | POST   | `/sessions`                   | [`SessionConfig`] (or none) |
//! | GET    | `/sessions/{id}/next`         |                            |
//! | POST   | `/sessions/{id}/responses`    | [`Submission`]             |
//! | POST   | `/sessions/{id}/finalize`     | `{"seed": u64}` (optional) |
//! | GET    | `/sessions/{id}/export.csv`   |                            |
//! | GET    | `/health`                     |                            |
//!
//! Errors come back as `{"error": kind, "message": text}`.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::schema;
use crate::session::{SessionConfig, SessionError, SessionService, Submission};

impl SessionError {
    fn status(&self) -> StatusCode {
        match self {
            SessionError::UnknownSession(_) => StatusCode::NOT_FOUND,
            SessionError::Finalized(_) | SessionError::OutOfOrder { .. } | SessionError::Incomplete { .. } => {
                StatusCode::CONFLICT
            }
            SessionError::Invalid(_) | SessionError::TooEarly { .. } | SessionError::GridNotShown(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            SessionError::Config(_) => StatusCode::BAD_REQUEST,
            SessionError::Corrupt(_) | SessionError::Payment(_) | SessionError::Io(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            SessionError::UnknownSession(_) => "unknown_session",
            SessionError::Finalized(_) => "finalized",
            SessionError::OutOfOrder { .. } => "out_of_order",
            SessionError::Invalid(_) => "invalid",
            SessionError::TooEarly { .. } => "too_early",
            SessionError::GridNotShown(_) => "grid_not_shown",
            SessionError::Incomplete { .. } => "incomplete",
            SessionError::Config(_) => "config",
            SessionError::Corrupt(_) => "corrupt_log",
            SessionError::Payment(_) => "payment",
            SessionError::Io(_) => "io",
        }
    }
}

impl IntoResponse for SessionError {
    fn into_response(self) -> Response {
        (self.status(), Json(json!({ "error": self.kind(), "message": self.to_string() }))).into_response()
    }
}

fn bad_request(message: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({ "error": "bad_request", "message": message }))).into_response()
}

/// Parses an optional JSON body; an empty body means the default.
fn parse_body<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> Result<T, serde_json::Error> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body)
}

async fn create(State(svc): State<Arc<SessionService>>, body: Bytes) -> Response {
    let config: SessionConfig = match parse_body(&body) {
        Ok(c) => c,
        Err(e) => return bad_request(format!("malformed JSON body: {e}")),
    };
    match svc.create(&config) {
        Ok(d) => (StatusCode::CREATED, Json(d)).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn next(State(svc): State<Arc<SessionService>>, Path(id): Path<String>) -> Response {
    match svc.next_step(&id) {
        Ok(view) => Json(view).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn respond(State(svc): State<Arc<SessionService>>, Path(id): Path<String>, body: Bytes) -> Response {
    let submission: Submission = match serde_json::from_slice(&body) {
        Ok(s) => s,
        Err(e) => return bad_request(format!("malformed submission: {e}")),
    };
    match svc.submit(&id, &submission) {
        Ok(receipt) => Json(receipt).into_response(),
        Err(e) => e.into_response(),
    }
}

#[derive(Debug, Default, Deserialize)]
struct FinalizeRequest {
    #[serde(default)]
    seed: Option<u64>,
}

async fn finalize(State(svc): State<Arc<SessionService>>, Path(id): Path<String>, body: Bytes) -> Response {
    let request: FinalizeRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(e) => return bad_request(format!("malformed JSON body: {e}")),
    };
    match svc.finalize(&id, request.seed) {
        Ok(summary) => Json(summary).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn export(State(svc): State<Arc<SessionService>>, Path(id): Path<String>) -> Response {
    match svc.export(&id) {
        Ok(records) => {
            ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], schema::to_csv_string(&records)).into_response()
        }
        Err(e) => e.into_response(),
    }
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

/// The API routes, plus static files from `static_dir` for every other
/// path when given.
pub fn router(service: Arc<SessionService>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/responses", post(respond))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/export.csv", get(export))
        .with_state(service);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}
