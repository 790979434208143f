//! HTTP/JSON front end for the episode debugger.
//!
//! | method | path | body |
//! |---|---|---|
//! | `POST` | `/sessions` | `CreateRequest` |
//! | `POST` | `/sessions/{id}/step` | `{"defender_action": <index or name>}` |
//! | `GET` | `/sessions/{id}` | |
//! | `DELETE` | `/sessions/{id}` | |
//! | `GET` | `/models` | |
//!
//! Errors are `{"error": code, "detail": text}` with 404 for unknown
//! sessions or models, 409 for finished sessions and 422 for rejected input.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use defensim_core::debugger::{ActionRef, CreateRequest, DebuggerError, SessionManager};
use serde::Deserialize;
use serde_json::json;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRequest {
    pub defender_action: ActionRef,
}

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    detail: String,
}

impl From<DebuggerError> for ApiError {
    fn from(e: DebuggerError) -> Self {
        let status = match &e {
            DebuggerError::UnknownModel(_) | DebuggerError::UnknownSession(_) => StatusCode::NOT_FOUND,
            DebuggerError::SessionDone(_) => StatusCode::CONFLICT,
            DebuggerError::InvalidConfig { .. }
            | DebuggerError::InvalidKernel { .. }
            | DebuggerError::InvalidStrategy(_)
            | DebuggerError::IllegalAction(_) => StatusCode::UNPROCESSABLE_ENTITY,
            DebuggerError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError { status, code: e.code(), detail: e.detail() }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, code: "bad_request", detail: e.body_text() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.code, "detail": self.detail}))).into_response()
    }
}

type Shared = Arc<SessionManager>;

async fn models(State(m): State<Shared>) -> Response {
    Json(m.models()).into_response()
}

async fn create(State(m): State<Shared>, body: Result<Json<CreateRequest>, JsonRejection>) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let snap = m.create(req)?;
    Ok((StatusCode::CREATED, Json(&*snap)).into_response())
}

async fn step(State(m): State<Shared>, Path(id): Path<String>, body: Result<Json<StepRequest>, JsonRejection>) -> Result<Response, ApiError> {
    let Json(req) = body?;
    // A step may wait on the session lock; keep that off the async workers.
    let snap = tokio::task::spawn_blocking(move || m.step(&id, &req.defender_action))
        .await
        .map_err(|e| ApiError::from(DebuggerError::Internal(e.to_string())))??;
    Ok(Json(&*snap).into_response())
}

async fn snapshot(State(m): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(&*m.snapshot(&id)?).into_response())
}

async fn delete(State(m): State<Shared>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    m.delete(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

pub fn router(manager: Shared) -> Router {
    Router::new()
        .route("/models", get(models))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(snapshot).delete(delete))
        .route("/sessions/{id}/step", post(step))
        .with_state(manager)
}

/// Serves until the process is stopped.
pub fn serve(addr: SocketAddr, manager: Shared) -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("debugger API listening on {}", listener.local_addr()?);
        axum::serve(listener, router(manager)).await
    })
}
