//! HTTP front end: `POST /translate`, `GET /metrics`, `GET /healthz`.

use std::collections::BTreeMap;
use std::future::Future;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{RouteError, Router, RouterConfig};
use crate::error::{Error, Result};
use crate::types::{Backend, BackendCalls, LanguagePair, Segment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslateRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub src: String,
    pub source_lang: String,
    pub target_lang: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslateResponse {
    pub id: String,
    pub translation: String,
    pub backend_used: Backend,
    pub evidence: BTreeMap<String, f64>,
    pub fallback: bool,
    pub latency_ms: f64,
    pub backend_calls: BackendCalls,
}

struct AppState {
    router: Arc<Router>,
    next_id: AtomicU64,
}

fn error(status: StatusCode, kind: &str, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into(), "kind": kind }))).into_response()
}

async fn translate(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: TranslateRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, "bad_request", format!("bad request body: {e}")),
    };
    let pair = match LanguagePair::new(req.source_lang, req.target_lang) {
        Ok(p) => p,
        Err(e) => return error(StatusCode::BAD_REQUEST, "bad_request", e.to_string()),
    };
    let id = req
        .id
        .unwrap_or_else(|| format!("req-{}", state.next_id.fetch_add(1, Ordering::Relaxed)));
    let segment = match Segment::new(id, req.src, pair) {
        Ok(s) => s,
        Err(e) => return error(StatusCode::BAD_REQUEST, "bad_request", e.to_string()),
    };
    match state.router.route_segment(&segment).await {
        Ok(out) => Json(TranslateResponse {
            id: segment.id,
            translation: out.translation,
            backend_used: out.decision.backend,
            evidence: out.decision.evidence,
            fallback: out.decision.fallback,
            latency_ms: out.decision.latency_ms,
            backend_calls: out.decision.backend_calls,
        })
        .into_response(),
        Err(RouteError::BadRequest(m)) => error(StatusCode::BAD_REQUEST, "bad_request", m),
        Err(e @ RouteError::Decider(_)) => error(StatusCode::INTERNAL_SERVER_ERROR, "decider", e.to_string()),
        Err(e) => error(StatusCode::BAD_GATEWAY, "backend", e.to_string()),
    }
}

async fn metrics(State(state): State<Arc<AppState>>) -> Response {
    Json(state.router.metrics()).into_response()
}

/// The axum application for a router.
pub fn app(router: Arc<Router>) -> axum::Router {
    let state = Arc::new(AppState {
        router,
        next_id: AtomicU64::new(0),
    });
    axum::Router::new()
        .route("/translate", post(translate))
        .route("/metrics", get(metrics))
        .route("/healthz", get(|| async { "ok" }))
        .with_state(state)
}

/// Serves on an already bound listener until `shutdown` resolves, then
/// drains in-flight requests.
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    router: Arc<Router>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<()> {
    let addr = listener.local_addr().ok();
    tracing::info!(?addr, "router listening");
    axum::serve(listener, app(router))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| Error::Config(format!("server error: {e}")))
}

/// Loads artifacts, binds `config.listen_address` and serves until Ctrl-C.
pub async fn serve(config: &RouterConfig) -> Result<()> {
    let router = Arc::new(Router::new(config)?);
    let listener = tokio::net::TcpListener::bind(&config.listen_address)
        .await
        .map_err(|e| Error::Config(format!("cannot bind {}: {e}", config.listen_address)))?;
    serve_on(listener, router, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
