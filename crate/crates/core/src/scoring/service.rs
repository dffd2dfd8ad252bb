//! HTTP service exposing the builtin scorers over the `/score` protocol.
//! Useful as a reference implementation and as a stand-in during tests.

use axum::body::Bytes;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use super::{ScoreItem, ScoreRequest, ScoreResponse, Scorer};

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn score_handler(body: Bytes) -> Response {
    let request: ScoreRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("bad request body: {e}")),
    };
    let items: Vec<ScoreItem> = request
        .items
        .iter()
        .map(|i| ScoreItem::new(&i.src, &i.hyp, i.reference.as_deref()))
        .collect();
    match Scorer::builtin(request.mode).score_batch(&items) {
        Ok(scores) => Json(ScoreResponse {
            scores: scores.into_iter().map(|s| s.value).collect(),
        })
        .into_response(),
        Err(e) => error(StatusCode::BAD_REQUEST, e.to_string()),
    }
}

/// `POST /score` and `GET /healthz` backed by the builtin scorers.
pub fn builtin_score_router() -> Router {
    Router::new()
        .route("/score", post(score_handler))
        .route("/healthz", get(|| async { "ok" }))
}
