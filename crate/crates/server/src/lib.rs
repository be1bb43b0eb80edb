//! HTTP front end for live elicitation sessions.
//!
//! | method | path                    | body / reply                        |
//! |--------|-------------------------|-------------------------------------|
//! | POST   | `/sessions`             | `SessionConfig` -> `{"id"}`         |
//! | GET    | `/sessions/{id}/query`  | `QueryPayload`                      |
//! | POST   | `/sessions/{id}/response` | `ResponsePayload` -> `ModelSnapshot` |
//! | GET    | `/sessions/{id}/model`  | `ModelSnapshot`                     |
//! | GET    | `/sessions/{id}/export` | `SessionExport`                     |
//! | POST   | `/sessions/replay`      | `SessionExport` -> `{"id", "model"}` |
//!
//! Failures reply `{"error": code, "detail": "..."}`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pragfeat::{Error, ModelSnapshot, QueryPayload, ResponsePayload, SessionConfig, SessionExport, SessionStore};
use serde::Serialize;
use serde_json::json;
use tower_http::cors::CorsLayer;

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self(Error::InvalidArgument(r.body_text()))
    }
}

impl ApiError {
    fn status_and_code(&self) -> (StatusCode, &'static str) {
        match &self.0 {
            Error::InvalidArgument(_) | Error::UnsupportedMode(_) | Error::Json(_) | Error::Ingestion { .. } => {
                (StatusCode::BAD_REQUEST, "invalid_argument")
            }
            Error::PreconditionViolation(_) => (StatusCode::BAD_REQUEST, "precondition_violation"),
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            Error::Validation { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "validation"),
            Error::ServiceUnavailable { .. } => (StatusCode::SERVICE_UNAVAILABLE, "service_unavailable"),
            Error::TrainingFailure { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "training_failure"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = self.status_and_code();
        let mut body = json!({ "error": code, "detail": self.0.to_string() });
        if let Error::Validation { missing } = &self.0 {
            body["missing"] = json!(missing);
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Serialize)]
pub struct Created {
    pub id: String,
}

#[derive(Serialize)]
pub struct Replayed {
    pub id: String,
    pub model: ModelSnapshot,
}

/// Runs store work that may train a model off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> pragfeat::Result<T> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(Error::InvalidArgument(format!("worker failed: {e}"))))?
        .map_err(ApiError)
}

async fn create(
    State(store): State<Arc<SessionStore>>,
    body: Result<Json<SessionConfig>, JsonRejection>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let Json(config) = body?;
    let id = store.create(config)?;
    tracing::info!(%id, "session created");
    Ok((StatusCode::CREATED, Json(Created { id })))
}

async fn query(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult<QueryPayload> {
    Ok(Json(store.next_query(&id)?))
}

async fn respond(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    body: Result<Json<ResponsePayload>, JsonRejection>,
) -> ApiResult<ModelSnapshot> {
    let Json(resp) = body?;
    Ok(Json(blocking(move || store.submit(&id, resp)).await?))
}

async fn model(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult<ModelSnapshot> {
    Ok(Json(blocking(move || store.snapshot(&id)).await?))
}

async fn export(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult<SessionExport> {
    Ok(Json(store.export(&id)?))
}

async fn replay(
    State(store): State<Arc<SessionStore>>,
    body: Result<Json<SessionExport>, JsonRejection>,
) -> Result<(StatusCode, Json<Replayed>), ApiError> {
    let Json(export) = body?;
    let replayed = blocking(move || {
        let id = store.replay(&export)?;
        let model = store.snapshot(&id)?;
        Ok(Replayed { id, model })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(replayed)))
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/replay", post(replay))
        .route("/sessions/{id}/query", get(query))
        .route("/sessions/{id}/response", post(respond))
        .route("/sessions/{id}/model", get(model))
        .route("/sessions/{id}/export", get(export))
        .layer(CorsLayer::permissive())
        .with_state(store)
}

/// Serves a fresh in-memory store until Ctrl-C.
pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(Arc::new(SessionStore::new())))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
