//! HTTP API over a queued-oracle [`Session`].

use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::predictor_api::{core_error, error_response, rejection};
use crate::session::{Session, SessionError};

pub fn router(session: Arc<Session>) -> Router {
    Router::new()
        .route("/api/experiment", get(experiment))
        .route("/api/rounds", get(rounds))
        .route("/api/queue", get(queue))
        .route("/api/images/{id}", get(image))
        .route("/api/annotations", post(annotate))
        .route("/api/rounds/advance", post(advance))
        .with_state(session)
}

fn session_error(e: SessionError) -> Response {
    match e {
        SessionError::NotFound(m) => error_response(StatusCode::NOT_FOUND, m, "not_found"),
        SessionError::Conflict(m) => error_response(StatusCode::CONFLICT, m, "conflict"),
        SessionError::Invalid(fields) => {
            let message = SessionError::Invalid(fields.clone()).to_string();
            let body = json!({ "error": message, "kind": "invalid_annotation", "fields": fields });
            (StatusCode::UNPROCESSABLE_ENTITY, Json(body)).into_response()
        }
        SessionError::Core(e) => core_error(&e),
    }
}

/// Runs a writer operation off the async workers; training can take a while.
async fn blocking<T, F>(session: Arc<Session>, f: F) -> Response
where
    T: serde::Serialize + Send + 'static,
    F: FnOnce(&Session) -> Result<T, SessionError> + Send + 'static,
{
    match tokio::task::spawn_blocking(move || f(&session)).await {
        Ok(Ok(body)) => Json(body).into_response(),
        Ok(Err(e)) => session_error(e),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), "panic"),
    }
}

async fn experiment(State(s): State<Arc<Session>>) -> Response {
    Json(s.status()).into_response()
}

async fn rounds(State(s): State<Arc<Session>>) -> Response {
    Json(s.records()).into_response()
}

#[derive(Debug, Default, Deserialize)]
struct QueueQuery {
    #[serde(default)]
    all: bool,
}

async fn queue(
    State(s): State<Arc<Session>>,
    q: Result<Query<QueueQuery>, QueryRejection>,
) -> Response {
    let all = match q {
        Ok(Query(q)) => q.all,
        Err(r) => return error_response(r.status(), r.body_text(), "bad_request"),
    };
    Json(s.queue(all)).into_response()
}

fn content_type(path: &Path) -> &'static str {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("tif" | "tiff") => "image/tiff",
        Some("bmp") => "image/bmp",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "application/octet-stream",
    }
}

async fn image(State(s): State<Arc<Session>>, UrlPath(id): UrlPath<String>) -> Response {
    let not_found = || error_response(StatusCode::NOT_FOUND, format!("unknown image id {id}"), "not_found");
    let Some(path) = id.parse::<u64>().ok().and_then(|n| s.dataset().image_path(n)) else {
        return not_found();
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => error_response(
            StatusCode::NOT_FOUND,
            format!("image file {} is missing", path.display()),
            "not_found",
        ),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), "io"),
    }
}

async fn annotate(
    State(s): State<Arc<Session>>,
    body: Result<Json<Value>, JsonRejection>,
) -> Response {
    match body {
        Ok(Json(v)) => blocking(s, move |s| s.submit(&v)).await,
        Err(r) => rejection(r),
    }
}

/// The body is optional; `{"round": r}` makes the call idempotent.
async fn advance(State(s): State<Arc<Session>>, body: Bytes) -> Response {
    let round = if body.iter().all(u8::is_ascii_whitespace) {
        None
    } else {
        match serde_json::from_slice::<Value>(&body) {
            Ok(Value::Object(m)) => match m.get("round") {
                None | Some(Value::Null) => None,
                Some(v) => match v.as_u64() {
                    Some(r) => Some(r as usize),
                    None => {
                        return session_error(SessionError::Invalid(vec![crate::session::FieldError {
                            field: "round".into(),
                            reason: "must be a non-negative integer".into(),
                        }]))
                    }
                },
            },
            Ok(_) => {
                return error_response(StatusCode::BAD_REQUEST, "body must be an object".into(), "bad_request")
            }
            Err(e) => return error_response(StatusCode::BAD_REQUEST, e.to_string(), "malformed_json"),
        }
    };
    blocking(s, move |s| s.advance(round)).await
}
