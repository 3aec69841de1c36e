//! HTTP surface for live sessions.
//!
//! | Method | Path | Success |
//! |---|---|---|
//! | POST | `/sessions` | 201 `{"session_id"}` |
//! | POST | `/sessions/{id}/segments` | 202 `{"seq"}` |
//! | GET | `/sessions/{id}/snapshot` | 200 snapshot |
//! | GET | `/sessions/{id}/events` | SSE, one `{"type":"snapshot","payload":...}` per `data:` line |
//! | POST | `/sessions/{id}/finish` | 200 final snapshot |
//! | GET | `/health` | 200 `{"status","index_size","provider_mode","tick_ms","sessions"}` |
//!
//! Errors are JSON `{"error": "..."}` with 400, 404, 409 or 503.

mod config;
mod driver;

use std::convert::Infallible;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use ainsight_core::pipeline::{Engine, SegmentPayload, SessionConfig, Snapshot, Speaker};
use ainsight_core::Error;
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use futures::Stream;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;
use tracing::info;

pub use config::{ServerConfig, DEFAULT_LISTEN_ADDR};
pub use driver::DEFAULT_POLL;

#[derive(Clone)]
pub struct AppState {
    engine: Option<Arc<Engine>>,
    poll: Duration,
}

impl AppState {
    pub fn new(engine: Option<Arc<Engine>>) -> Self {
        AppState {
            engine,
            poll: DEFAULT_POLL,
        }
    }

    /// How often tick drivers re-read the clock; mostly useful with a
    /// simulated clock.
    pub fn with_poll(mut self, poll: Duration) -> Self {
        self.poll = poll;
        self
    }

    fn engine(&self) -> Result<&Arc<Engine>, ApiError> {
        self.engine.as_ref().ok_or_else(|| {
            ApiError(
                StatusCode::SERVICE_UNAVAILABLE,
                "engine is not configured: no index path was given".into(),
            )
        })
    }
}

#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownSession(_) => StatusCode::NOT_FOUND,
            Error::SessionFinished(_) | Error::DuplicateSession(_) => StatusCode::CONFLICT,
            Error::InvalidInput(_) | Error::Json(_) => StatusCode::BAD_REQUEST,
            Error::EmptyKnowledgeBase(_) => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn bad_request(message: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, message.into())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateBody {
    session_id: Option<String>,
    fixture_key: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentBody {
    speaker: Speaker,
    text: Option<String>,
    audio_b64: Option<String>,
    offset_ms: u64,
}

#[derive(Debug, Serialize)]
struct ApiEvent<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    payload: &'a Snapshot,
}

fn parse_body<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| bad_request(format!("invalid JSON body: {e}")))
}

async fn create_session(
    State(state): State<AppState>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let engine = state.engine()?;
    let body: CreateBody = parse_body(&body)?;
    let session = engine.create_session(SessionConfig {
        session_id: body.session_id,
        fixture_key: body.fixture_key,
        clock: None,
    })?;
    driver::spawn(session.clone(), state.poll);
    info!(session = session.id(), "session created");
    Ok((
        StatusCode::CREATED,
        Json(json!({ "session_id": session.id() })),
    ))
}

async fn append_segment(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let session = state.engine()?.session(&id)?;
    let body: SegmentBody = serde_json::from_slice(&body)
        .map_err(|e| bad_request(format!("invalid segment body: {e}")))?;
    let payload = match (body.text, body.audio_b64) {
        (Some(text), None) => SegmentPayload::Text(text),
        (None, Some(b64)) => SegmentPayload::Audio(
            base64::engine::general_purpose::STANDARD
                .decode(b64.trim())
                .map_err(|e| bad_request(format!("audio_b64 is not valid base64: {e}")))?,
        ),
        _ => return Err(bad_request("exactly one of text and audio_b64 is required")),
    };
    let seq = tokio::task::spawn_blocking(move || {
        session.append_segment(body.speaker, payload, body.offset_ms)
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok((StatusCode::ACCEPTED, Json(json!({ "seq": seq }))))
}

async fn snapshot(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<Snapshot>, ApiError> {
    Ok(Json(Snapshot::clone(
        &state.engine()?.session(&id)?.snapshot(),
    )))
}

async fn events(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let rx = state.engine()?.session(&id)?.subscribe();
    // The first item is whatever is current; after that, one item per
    // observed change. A slow reader skips versions but never sees them out
    // of order.
    let stream = futures::stream::unfold((rx, true), |(mut rx, first)| async move {
        if !first && rx.changed().await.is_err() {
            return None;
        }
        let snap = rx.borrow_and_update().clone();
        let data = serde_json::to_string(&ApiEvent {
            kind: "snapshot",
            payload: &snap,
        })
        .expect("snapshots serialize");
        let event = Event::default()
            .id(snap.snapshot_version.to_string())
            .data(data);
        Some((Ok(event), (rx, false)))
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

async fn finish(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<Snapshot>, ApiError> {
    let session = state.engine()?.session(&id)?;
    let snap = tokio::task::spawn_blocking(move || session.finish())
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(Snapshot::clone(&snap)))
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    match &state.engine {
        Some(engine) => Json(serde_json::to_value(engine.health()).expect("health serializes")),
        None => Json(json!({
            "status": "unconfigured",
            "index_size": 0,
            "provider_mode": null,
            "tick_ms": null,
            "sessions": 0,
        })),
    }
}

/// The API routes, with permissive CORS so a separately hosted dashboard can
/// call them. With `ui_dir`, unmatched paths serve static files from it.
pub fn router(state: AppState, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/segments", post(append_segment))
        .route("/sessions/{id}/snapshot", get(snapshot))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/finish", post(finish))
        .with_state(state);
    let api = match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    api.layer(CorsLayer::permissive())
}

/// Serves until the listener fails or the process is stopped.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    ui_dir: Option<&Path>,
) -> std::io::Result<()> {
    info!(addr = ?listener.local_addr()?, "listening");
    axum::serve(listener, router(state, ui_dir)).await
}
