//! HTTP front end of the rating service.
//!
//! | method | path | reply |
//! |---|---|---|
//! | `POST` | `/participants` | `{participant_id}` |
//! | `GET` | `/participants/{id}/tasks` | both tasks with transcripts and questions |
//! | `POST` | `/responses` | acknowledgement; 409 duplicate, 404 unknown task, 422 malformed |
//! | `GET` | `/admin/export` | included comparisons per dimension; bearer token required |

use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use consteval::rating::{RatingService, RecordError, ServiceError, SubmitRequest};
use serde_json::json;
use tokio::net::TcpListener;

pub struct AppState {
    pub service: RatingService,
    /// Bearer token for the admin routes; without one they always refuse.
    pub admin_token: Option<String>,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = match &e {
            ServiceError::Record(r) => match r {
                RecordError::UnknownTask(_) | RecordError::UnknownParticipant(_) => StatusCode::NOT_FOUND,
                RecordError::Duplicate(_)
                | RecordError::DuplicateParticipant(_)
                | RecordError::DuplicateTask(_)
                | RecordError::Inactive { .. } => StatusCode::CONFLICT,
                RecordError::Malformed(_) => StatusCode::UNPROCESSABLE_ENTITY,
                RecordError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            },
            ServiceError::Assign(_) | ServiceError::Setup(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            tracing::error!(error = %e, "request failed");
        }
        Self(status, e.to_string())
    }
}

async fn enroll(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let reply = state.service.enroll()?;
    tracing::info!(participant = %reply.participant_id, "enrolled");
    Ok(Json(reply).into_response())
}

async fn tasks(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(state.service.tasks(&id)?).into_response())
}

async fn respond(
    State(state): State<Arc<AppState>>,
    body: Result<Json<SubmitRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(request) = body.map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()))?;
    let reply = state.service.submit(request)?;
    Ok(Json(reply).into_response())
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

fn authorised(state: &AppState, headers: &HeaderMap) -> bool {
    let Some(expected) = state.admin_token.as_deref() else { return false };
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|given| constant_time_eq(given.as_bytes(), expected.as_bytes()))
}

async fn export(State(state): State<Arc<AppState>>, headers: HeaderMap) -> Result<Response, ApiError> {
    if !authorised(&state, &headers) {
        return Err(ApiError(StatusCode::UNAUTHORIZED, "missing or invalid bearer token".into()));
    }
    Ok(Json(state.service.export()).into_response())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/participants", post(enroll))
        .route("/participants/{id}/tasks", get(tasks))
        .route("/responses", post(respond))
        .route("/admin/export", get(export))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
