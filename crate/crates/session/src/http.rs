//! JSON API over a [`Manager`].

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use uuid::Uuid;

use crate::config::SessionRequest;
use crate::error::SessionError;
use crate::manager::{Manager, RespondRequest};
use crate::session::SessionSnapshot;

#[derive(Serialize)]
struct ErrorBody {
    error: String,
    kind: &'static str,
}

impl IntoResponse for SessionError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self {
            SessionError::InvalidConfig(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_config"),
            SessionError::InvalidResponse(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_response"),
            SessionError::Trade(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_trade"),
            SessionError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            SessionError::StaleToken { .. } => (StatusCode::CONFLICT, "stale_token"),
            SessionError::Ended(_) => (StatusCode::CONFLICT, "ended"),
            SessionError::Io { .. } | SessionError::Corrupt { .. } => {
                tracing::error!(error = %self, "session storage failure");
                (StatusCode::INTERNAL_SERVER_ERROR, "storage")
            }
        };
        (status, Json(ErrorBody { error: self.to_string(), kind })).into_response()
    }
}

type ApiResult<T> = Result<T, SessionError>;

async fn create(State(m): State<Arc<Manager>>, Json(req): Json<SessionRequest>) -> ApiResult<impl IntoResponse> {
    Ok((StatusCode::CREATED, Json(m.create(req)?)))
}

async fn snapshot(State(m): State<Arc<Manager>>, Path(id): Path<Uuid>) -> ApiResult<impl IntoResponse> {
    let snap = m.snapshot(id)?;
    Ok(Json(SessionSnapshot::clone(&snap)))
}

async fn respond(
    State(m): State<Arc<Manager>>,
    Path(id): Path<Uuid>,
    Json(req): Json<RespondRequest>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(m.respond(id, &req)?))
}

async fn end(State(m): State<Arc<Manager>>, Path(id): Path<Uuid>) -> ApiResult<impl IntoResponse> {
    Ok(Json(m.end(id)?))
}

async fn transcript(State(m): State<Arc<Manager>>, Path(id): Path<Uuid>) -> ApiResult<impl IntoResponse> {
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], m.transcript(id)?))
}

pub fn router(manager: Arc<Manager>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(snapshot))
        .route("/sessions/{id}/respond", post(respond))
        .route("/sessions/{id}/end", post(end))
        .route("/sessions/{id}/transcript", get(transcript))
        .with_state(manager)
}
