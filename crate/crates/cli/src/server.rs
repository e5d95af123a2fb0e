//! HTTP control surface over one store.
//!
//! ```text
//! GET  /state                 handoff view, stage statuses, pending gates
//! GET  /gates[?pending=true]  gate registry
//! POST /gates/{id}/decision   {"verdict": "approve"|"reject"|"modify", "note": ...}
//! GET  /audit                 audit entries
//! GET  /telemetry             telemetry records
//! GET  /events[?after=N]      server-sent events, one JSON event per transition
//! ```

use std::collections::VecDeque;
use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::stream::{self, Stream};
use serde::Deserialize;

use harness_core::pipeline::{get_gate, resolve_gate, Corpus, GateAnswer, GateError, GateResponder, GateVerdict, HumanGate};
use harness_core::store::{Event, Store};

use crate::views::{audit_view, gates_view, state_view, telemetry_view};
use crate::CliError;

pub const DEFAULT_POLL: Duration = Duration::from_millis(250);

#[derive(Clone)]
pub struct AppState {
    pub store: Store,
    pub corpus: Arc<Corpus>,
    /// How often the event stream and the gate waiter look for changes.
    pub poll: Duration,
}

impl AppState {
    pub fn new(store: Store, corpus: Corpus) -> Self {
        Self {
            store,
            corpus: Arc::new(corpus),
            poll: DEFAULT_POLL,
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/state", get(get_state))
        .route("/gates", get(get_gates))
        .route("/gates/{id}/decision", post(post_decision))
        .route("/audit", get(get_audit))
        .route("/telemetry", get(get_telemetry))
        .route("/events", get(get_events))
        .with_state(state)
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<CliError> for ApiError {
    fn from(e: CliError) -> Self {
        match e {
            CliError::Gate(g) => g.into(),
            other => ApiError(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        }
    }
}

impl From<GateError> for ApiError {
    fn from(e: GateError) -> Self {
        let status = match e {
            GateError::UnknownGate(_) => StatusCode::NOT_FOUND,
            GateError::AlreadyResolved { .. } => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn get_state(State(app): State<AppState>) -> ApiResult<crate::views::StateView> {
    Ok(Json(state_view(&app.store, &app.corpus)?))
}

#[derive(Debug, Default, Deserialize)]
struct GatesQuery {
    #[serde(default)]
    pending: bool,
}

async fn get_gates(State(app): State<AppState>, Query(q): Query<GatesQuery>) -> ApiResult<Vec<HumanGate>> {
    Ok(Json(gates_view(&app.store, q.pending)?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionBody {
    verdict: GateVerdict,
    #[serde(default)]
    note: Option<String>,
}

async fn post_decision(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<DecisionBody>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let (gate, route) = resolve_gate(&app.store, &id, body.verdict, body.note.as_deref())?;
    Ok(Json(serde_json::json!({ "gate": gate, "route": route })))
}

async fn get_audit(State(app): State<AppState>) -> ApiResult<Vec<harness_core::store::AuditEntry>> {
    Ok(Json(audit_view(&app.store)?))
}

async fn get_telemetry(State(app): State<AppState>) -> ApiResult<Vec<harness_core::pipeline::TelemetryRecord>> {
    Ok(Json(telemetry_view(&app.store)?))
}

#[derive(Debug, Default, Deserialize)]
struct EventsQuery {
    after: Option<u64>,
}

fn to_sse(event: &Event) -> SseEvent {
    SseEvent::default()
        .id(event.seq.to_string())
        .event(event.kind.clone())
        .data(serde_json::to_string(event).expect("event serializes"))
}

/// Replays events after `Last-Event-ID` (or `?after=`), then follows the
/// log.
async fn get_events(
    State(app): State<AppState>,
    headers: HeaderMap,
    Query(q): Query<EventsQuery>,
) -> Sse<impl Stream<Item = Result<SseEvent, Infallible>>> {
    let after = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse().ok())
        .or(q.after)
        .unwrap_or(0);
    let stream = stream::unfold((app, after, VecDeque::new()), |(app, mut after, mut queue)| async move {
        loop {
            if let Some(event) = queue.pop_front() {
                return Some((Ok(to_sse(&event)), (app, after, queue)));
            }
            let store = app.store.clone();
            let fresh = tokio::task::spawn_blocking(move || store.events_since(after))
                .await
                .ok()
                .and_then(Result::ok)
                .unwrap_or_default();
            if let Some(last) = fresh.last() {
                after = last.seq;
            }
            queue.extend(fresh);
            if queue.is_empty() {
                tokio::time::sleep(app.poll).await;
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}

/// Blocks the pipeline on each gate until a decision is recorded in the
/// store by any client.
pub struct StoreWaiter {
    pub store: Store,
    pub poll: Duration,
}

impl GateResponder for StoreWaiter {
    fn respond(&mut self, gate: &HumanGate) -> Option<GateAnswer> {
        loop {
            match get_gate(&self.store, &gate.id) {
                Ok(Some(g)) => {
                    if let Some(d) = g.decision {
                        return Some(GateAnswer::new(d.verdict, d.note.as_deref()));
                    }
                }
                Ok(None) | Err(_) => return None,
            }
            std::thread::sleep(self.poll);
        }
    }
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
