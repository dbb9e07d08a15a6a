use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::service::{Service, ServiceError};
use crate::store::StorageError;

#[derive(Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl ServiceError {
    pub fn status_and_code(&self) -> (StatusCode, &'static str) {
        match self {
            ServiceError::UnknownParticipant(_) => (StatusCode::NOT_FOUND, "unknown_participant"),
            ServiceError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            ServiceError::PoolExhausted => (StatusCode::CONFLICT, "pool_exhausted"),
            ServiceError::SessionNotActive(_) => (StatusCode::CONFLICT, "session_not_active"),
            ServiceError::RepeatGuess(_) => (StatusCode::CONFLICT, "repeat_guess"),
            ServiceError::InvalidSymbol(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_symbol"),
            ServiceError::RateLimited { .. } => (StatusCode::TOO_MANY_REQUESTS, "rate_limited"),
            ServiceError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ServiceError::Storage(StorageError::Unavailable(_)) => {
                (StatusCode::SERVICE_UNAVAILABLE, "storage_unavailable")
            }
            ServiceError::Storage(StorageError::Corrupt { .. }) | ServiceError::Internal(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, code) = self.status_and_code();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let mut resp = (
            status,
            Json(ErrorBody {
                code: code.to_owned(),
                message: self.to_string(),
            }),
        )
            .into_response();
        if let ServiceError::RateLimited { retry_after } = self {
            // whole seconds per HTTP, rounded up; the body has the exact value
            let secs = retry_after.as_millis().div_ceil(1000).max(1);
            resp.headers_mut()
                .insert(header::RETRY_AFTER, HeaderValue::from(secs as u64));
        }
        resp
    }
}

/// JSON body parsing with errors in the API's own shape. An empty body is
/// read as `{}`.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    let body: &[u8] = if body.iter().all(u8::is_ascii_whitespace) {
        b"{}"
    } else {
        body
    };
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("invalid JSON body: {e}")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegisterRequest {
    #[serde(default)]
    display_name: Option<String>,
}

#[derive(Serialize, Deserialize)]
pub struct RegisterResponse {
    pub participant_id: String,
}

#[derive(Deserialize)]
struct StartRequest {
    participant_id: String,
}

#[derive(Deserialize)]
struct GuessRequest {
    symbol: String,
}

#[derive(Deserialize)]
struct ExportQuery {
    #[serde(default)]
    format: Option<String>,
}

type Shared = State<Arc<Service>>;

// Storage I/O is synchronous and short; handlers run it on the blocking pool.
async fn blocking<T, F>(svc: Arc<Service>, f: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce(&Service) -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

async fn register(State(svc): Shared, body: Bytes) -> Result<impl IntoResponse, ServiceError> {
    let req: RegisterRequest = parse(&body)?;
    let participant_id = blocking(svc, move |s| s.register(req.display_name)).await?;
    Ok((StatusCode::CREATED, Json(RegisterResponse { participant_id })))
}

async fn start(State(svc): Shared, body: Bytes) -> Result<impl IntoResponse, ServiceError> {
    let req: StartRequest = parse(&body)?;
    let started = blocking(svc, move |s| s.start_session(&req.participant_id)).await?;
    Ok((StatusCode::CREATED, Json(started)))
}

async fn guess(
    State(svc): Shared,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ServiceError> {
    let req: GuessRequest = parse(&body)?;
    Ok(Json(blocking(svc, move |s| s.guess(&id, &req.symbol)).await?))
}

async fn abandon(State(svc): Shared, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(blocking(svc, move |s| s.abandon(&id)).await?))
}

async fn session(State(svc): Shared, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(svc.session(&id)?))
}

async fn stats(State(svc): Shared) -> impl IntoResponse {
    Json(svc.stats())
}

async fn export(
    State(svc): Shared,
    Query(q): Query<ExportQuery>,
) -> Result<impl IntoResponse, ServiceError> {
    match q.format.as_deref() {
        None | Some("jsonl") => {}
        Some(other) => {
            return Err(ServiceError::BadRequest(format!(
                "unsupported export format {other:?}; only jsonl"
            )))
        }
    }
    let bytes = blocking(svc, |s| Ok(s.export_jsonl())).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], bytes))
}

async fn not_found() -> ServiceError {
    ServiceError::BadRequest("no such endpoint".into())
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/api/participants", post(register))
        .route("/api/sessions", post(start))
        .route("/api/sessions/{id}", get(session))
        .route("/api/sessions/{id}/guesses", post(guess))
        .route("/api/sessions/{id}/abandon", post(abandon))
        .route("/api/stats", get(stats))
        .route("/api/export", get(export))
        .fallback(not_found)
        .with_state(service)
}
