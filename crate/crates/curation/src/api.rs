//! REST routes over a shared [`Store`].

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ontogrow_core::evaluation::{Decision, Stratum};
use ontogrow_core::export::CONTENT_TYPE;
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::store::{CandidateFilter, Status, Store, StoreError};

pub const REVIEWER_HEADER: &str = "x-reviewer";

pub type SharedStore = Arc<RwLock<Store>>;

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let code = match e {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::Conflict { .. } => StatusCode::CONFLICT,
            StoreError::EmptyReviewer => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

fn bad_request(message: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, message.into())
}

#[derive(Debug, Deserialize)]
struct CandidateQuery {
    status: Option<String>,
    level: Option<String>,
    section: Option<String>,
}

#[derive(Debug, Deserialize)]
struct VerdictBody {
    triple_id: String,
    decision: Decision,
    reviewer: Option<String>,
}

fn non_empty(v: Option<String>) -> Option<String> {
    v.map(|s| s.trim().to_string()).filter(|s| !s.is_empty())
}

async fn candidates(State(store): State<SharedStore>, Query(q): Query<CandidateQuery>) -> Result<Response, ApiError> {
    let filter = CandidateFilter {
        status: non_empty(q.status)
            .map(|s| s.parse::<Status>())
            .transpose()
            .map_err(bad_request)?,
        level: non_empty(q.level)
            .map(|s| s.parse::<Stratum>())
            .transpose()
            .map_err(bad_request)?,
        section: non_empty(q.section),
    };
    let list = store.read().expect("store lock").list_candidates(&filter);
    Ok(Json(list).into_response())
}

async fn verdicts(
    State(store): State<SharedStore>,
    headers: HeaderMap,
    Json(body): Json<VerdictBody>,
) -> Result<Response, ApiError> {
    let reviewer = non_empty(body.reviewer)
        .or_else(|| {
            non_empty(
                headers
                    .get(REVIEWER_HEADER)
                    .and_then(|v| v.to_str().ok())
                    .map(str::to_string),
            )
        })
        .ok_or(ApiError(StatusCode::BAD_REQUEST, StoreError::EmptyReviewer.to_string()))?;
    let record = store
        .write()
        .expect("store lock")
        .submit_verdict(&body.triple_id, body.decision, &reviewer)?;
    Ok(Json(record).into_response())
}

async fn report(State(store): State<SharedStore>) -> Response {
    Json(store.read().expect("store lock").report()).into_response()
}

async fn export(State(store): State<SharedStore>) -> Result<Response, ApiError> {
    let xml = store.read().expect("store lock").export()?;
    Ok(([(header::CONTENT_TYPE, CONTENT_TYPE)], xml).into_response())
}

async fn health(State(store): State<SharedStore>) -> Response {
    let store = store.read().expect("store lock");
    Json(json!({ "status": "ok", "candidates": store.len(), "gold": store.gold_len() })).into_response()
}

/// API routes; static UI assets are served from `ui_dir` when given.
pub fn router(store: SharedStore, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/candidates", get(candidates))
        .route("/verdicts", post(verdicts))
        .route("/report", get(report))
        .route("/export", get(export))
        .route("/health", get(health))
        .with_state(store);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds `addr` and serves until the task is cancelled. Returns the bound
/// address through `on_bound` before accepting connections.
pub async fn serve(
    store: SharedStore,
    addr: SocketAddr,
    ui_dir: Option<PathBuf>,
    on_bound: impl FnOnce(SocketAddr),
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    tracing::info!(%local, "curation service listening");
    on_bound(local);
    axum::serve(listener, router(store, ui_dir)).await
}
