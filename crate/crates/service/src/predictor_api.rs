//! Serves any [`Predictor`] over the `/v1` JSON protocol.

use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use boxal_core::predictors::protocol::ErrorResponse;
use boxal_core::predictors::{PredictRequest, Predictor, TrainRequest};
use boxal_core::Error;
use serde::Serialize;

type Shared = Arc<Mutex<Box<dyn Predictor>>>;

pub fn router(predictor: Box<dyn Predictor>) -> Router {
    let state: Shared = Arc::new(Mutex::new(predictor));
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/train", post(train))
        .route("/v1/predict", post(predict))
        .with_state(state)
}

/// HTTP status for a predictor-side error.
pub fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::UnknownTag(_) | Error::UnknownImage(_) => StatusCode::NOT_FOUND,
        Error::InvalidArgument(_)
        | Error::InvalidBox { .. }
        | Error::Empty(_)
        | Error::SampleTooLarge { .. }
        | Error::InvalidRle(_) => StatusCode::UNPROCESSABLE_ENTITY,
        Error::PredictorUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

pub(crate) fn error_response(status: StatusCode, error: String, kind: &str) -> Response {
    let body = ErrorResponse {
        error,
        kind: kind.to_string(),
    };
    (status, Json(body)).into_response()
}

pub(crate) fn core_error(e: &Error) -> Response {
    (status_of(e), Json(ErrorResponse::from(e))).into_response()
}

pub(crate) fn rejection(r: JsonRejection) -> Response {
    let kind = match r {
        JsonRejection::JsonSyntaxError(_) => "malformed_json",
        JsonRejection::JsonDataError(_) => "invalid_body",
        JsonRejection::MissingJsonContentType(_) => "content_type",
        _ => "bad_request",
    };
    error_response(r.status(), r.body_text(), kind)
}

async fn blocking<T, F>(state: Shared, f: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce(&mut dyn Predictor) -> boxal_core::Result<T> + Send + 'static,
{
    let joined = tokio::task::spawn_blocking(move || {
        let mut guard = state.lock().unwrap_or_else(|p| p.into_inner());
        f(guard.as_mut())
    })
    .await;
    match joined {
        Ok(Ok(body)) => Json(body).into_response(),
        Ok(Err(e)) => core_error(&e),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), "panic"),
    }
}

async fn health(State(state): State<Shared>) -> Response {
    blocking(state, |p| p.health()).await
}

async fn train(
    State(state): State<Shared>,
    body: Result<Json<TrainRequest>, JsonRejection>,
) -> Response {
    match body {
        Ok(Json(req)) => blocking(state, move |p| p.train(&req)).await,
        Err(r) => rejection(r),
    }
}

async fn predict(
    State(state): State<Shared>,
    body: Result<Json<PredictRequest>, JsonRejection>,
) -> Response {
    match body {
        Ok(Json(req)) => blocking(state, move |p| p.predict(&req)).await,
        Err(r) => rejection(r),
    }
}
