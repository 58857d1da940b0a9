//! HTTP+JSON routes over a [`SessionStore`]. Selection and retraining are
//! CPU-bound, so every handler runs on the blocking pool.

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};

use crate::error::{ServiceError, ServiceResult};
use crate::store::{CreateSession, LabelSubmission, SessionStore};

type Shared = Arc<SessionStore>;

async fn blocking<T, F>(store: Shared, f: F) -> ServiceResult<T>
where
    T: Send + 'static,
    F: FnOnce(&SessionStore) -> ServiceResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| ServiceError::Log(std::io::Error::other(e.to_string())))?
}

async fn create(
    State(store): State<Shared>,
    body: Result<Json<CreateSession>, axum::extract::rejection::JsonRejection>,
) -> ServiceResult<impl IntoResponse> {
    let Json(req) = body.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    let status = blocking(store, move |s| s.create(req)).await?;
    Ok((StatusCode::CREATED, Json(status)))
}

async fn status(State(store): State<Shared>, Path(id): Path<String>) -> ServiceResult<impl IntoResponse> {
    Ok(Json(blocking(store, move |s| s.status(&id)).await?))
}

async fn query(State(store): State<Shared>, Path(id): Path<String>) -> ServiceResult<impl IntoResponse> {
    Ok(Json(blocking(store, move |s| s.query(&id)).await?))
}

async fn label(
    State(store): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<LabelSubmission>, axum::extract::rejection::JsonRejection>,
) -> ServiceResult<impl IntoResponse> {
    let Json(sub) = body.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    Ok(Json(blocking(store, move |s| s.label(&id, sub)).await?))
}

async fn finalize(State(store): State<Shared>, Path(id): Path<String>) -> ServiceResult<impl IntoResponse> {
    Ok(Json(blocking(store, move |s| s.finalize(&id)).await?))
}

async fn outcome(State(store): State<Shared>, Path(id): Path<String>) -> ServiceResult<impl IntoResponse> {
    Ok(Json(blocking(store, move |s| s.outcome(&id)).await?))
}

async fn abort(State(store): State<Shared>, Path(id): Path<String>) -> ServiceResult<impl IntoResponse> {
    Ok(Json(blocking(store, move |s| s.abort(&id)).await?))
}

async fn fallback() -> ServiceError {
    ServiceError::NotFound("no such route".into())
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(status))
        .route("/sessions/{id}/query", get(query))
        .route("/sessions/{id}/label", post(label))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/outcome", get(outcome))
        .route("/sessions/{id}/abort", post(abort))
        .fallback(fallback)
        .with_state(store)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(store: Arc<SessionStore>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(store)).await
}
