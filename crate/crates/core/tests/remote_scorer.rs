mod support;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::http::StatusCode;
use axum::routing::post;
use axum::Json;
use serde_json::{json, Value};

use mtcascade::scoring::contract::run_contract_suite;
use mtcascade::scoring::service::builtin_score_router;
use mtcascade::scoring::{ScoreItem, Scorer, ScorerSpec};
use mtcascade::{Error, ScoreKind};
use support::TestServer;

fn items(records: &[mtcascade::EvalRecord], mode: ScoreKind) -> Vec<ScoreItem<'_>> {
    records
        .iter()
        .map(|r| {
            let reference = match mode {
                ScoreKind::ReferenceBased => r.reference.as_deref(),
                ScoreKind::ReferenceFree => None,
            };
            ScoreItem::new(&r.segment.text, r.nmt_hyp.as_deref().unwrap(), reference)
        })
        .collect()
}

#[test]
fn contract_suite_passes_against_builtin_service() {
    let server = TestServer::spawn(builtin_score_router());
    let checks = run_contract_suite(&server.base_url);
    assert!(!checks.is_empty());
    for c in &checks {
        assert!(c.passed(), "{} failed: {:?}", c.name, c.outcome);
    }
}

#[test]
fn contract_suite_flags_a_broken_service() {
    let app = axum::Router::new().route("/score", post(|| async { Json(json!({ "scores": [50.0] })) }));
    let server = TestServer::spawn(app);
    let checks = run_contract_suite(&server.base_url);
    assert!(checks.iter().any(|c| !c.passed()));
}

#[test]
fn remote_scores_match_builtin() {
    let server = TestServer::spawn(builtin_score_router());
    let records = support::records(150, 3, 0.2);
    for mode in [ScoreKind::ReferenceBased, ScoreKind::ReferenceFree] {
        let batch = items(&records, mode);
        let mut spec = ScorerSpec::remote(mode, server.base_url.clone());
        spec.batch_size = 16;
        let remote = Scorer::new(spec).unwrap().score_batch(&batch).unwrap();
        let local = Scorer::builtin(mode).score_batch(&batch).unwrap();
        assert_eq!(remote, local, "{mode:?}");
    }
}

#[test]
fn timeout_names_the_endpoint() {
    let app = axum::Router::new().route(
        "/score",
        post(|| async {
            tokio::time::sleep(Duration::from_secs(2)).await;
            Json(json!({ "scores": [1.0] }))
        }),
    );
    let server = TestServer::spawn(app);
    let mut spec = ScorerSpec::remote(ScoreKind::ReferenceFree, server.base_url.clone());
    spec.timeout_ms = 150;
    let err = Scorer::new(spec)
        .unwrap()
        .score_batch(&[ScoreItem::new("a", "b", None)])
        .unwrap_err();
    let text = err.to_string();
    assert!(text.contains(&server.base_url), "{text}");
    assert!(matches!(err, Error::AtItem { ref source, .. } if matches!(**source, Error::ScorerTimeout { .. })), "{err:?}");
}

fn counting_server(status: StatusCode) -> (TestServer, Arc<AtomicUsize>) {
    let hits = Arc::new(AtomicUsize::new(0));
    let h = hits.clone();
    let app = axum::Router::new().route(
        "/score",
        post(move || {
            let h = h.clone();
            async move {
                h.fetch_add(1, Ordering::SeqCst);
                (status, Json(json!({ "error": "nope" })))
            }
        }),
    );
    (TestServer::spawn(app), hits)
}

#[test]
fn server_errors_are_retried_up_to_the_budget() {
    let (server, hits) = counting_server(StatusCode::INTERNAL_SERVER_ERROR);
    let mut spec = ScorerSpec::remote(ScoreKind::ReferenceFree, server.base_url.clone());
    spec.max_retries = 2;
    let err = Scorer::new(spec).unwrap().score_batch(&[ScoreItem::new("a", "b", None)]).unwrap_err();
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    assert!(err.to_string().contains("nope"), "{err}");
}

#[test]
fn client_errors_are_not_retried() {
    let (server, hits) = counting_server(StatusCode::BAD_REQUEST);
    let mut spec = ScorerSpec::remote(ScoreKind::ReferenceFree, server.base_url.clone());
    spec.max_retries = 5;
    assert!(Scorer::new(spec).unwrap().score_batch(&[ScoreItem::new("a", "b", None)]).is_err());
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn malformed_responses_are_rejected() {
    for body in [json!({ "scores": [10.0] }), json!({ "scores": [10.0, 140.0] }), json!({ "nothing": 1 })] {
        let app = axum::Router::new().route(
            "/score",
            post(move |Json(_): Json<Value>| {
                let body = body.clone();
                async move { Json(body) }
            }),
        );
        let server = TestServer::spawn(app);
        let spec = ScorerSpec::remote(ScoreKind::ReferenceFree, server.base_url.clone());
        let err = Scorer::new(spec)
            .unwrap()
            .score_batch(&[ScoreItem::new("a", "b", None), ScoreItem::new("c", "d", None)])
            .unwrap_err();
        assert!(err.to_string().contains("malformed"), "{err}");
    }
}

#[test]
fn unreachable_scorer_fails_cleanly() {
    let spec = ScorerSpec::remote(ScoreKind::ReferenceFree, support::closed_port_url());
    assert!(Scorer::new(spec).unwrap().score_batch(&[ScoreItem::new("a", "b", None)]).is_err());
}
