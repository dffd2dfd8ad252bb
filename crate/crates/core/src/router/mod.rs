//! Online router: consult the decider, call exactly the backends it needs,
//! count what happened.

mod backend;
mod prompt;
pub mod service;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::decider::{Decider, DecisionContext, DeciderSpec, Policy};
use crate::error::{Error, Result};
use crate::fsutil::read_json;
use crate::scoring::{ScoreItem, Scorer, ScorerSpec};
use crate::types::{Backend, BackendCalls, LanguagePair, RoutingDecision, ScoreKind, Segment};

pub use backend::{BackendClient, BackendError, BackendKind, BackendSpec, SimulatedBackendProfile};
pub use prompt::{check_template, render_prompt, LanguageNames, DEFAULT_PROMPT_TEMPLATE, PLACEHOLDERS};
pub use service::{app, serve, serve_on, TranslateRequest, TranslateResponse};

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterConfig {
    pub pair: LanguagePair,
    pub decider: DeciderSpec,
    pub nmt: BackendSpec,
    pub llm: BackendSpec,
    #[serde(default)]
    pub fallback_enabled: bool,
    #[serde(default = "default_listen")]
    pub listen_address: String,
    /// QE scorer for the qet policy; builtin reference-free when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qe_scorer: Option<ScorerSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub language_names: BTreeMap<String, String>,
}

impl RouterConfig {
    /// Reads a config file; relative artifact paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut config: Self = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.decider.resolve_paths(base);
        for spec in [&mut config.nmt, &mut config.llm] {
            if let Some(p) = spec.simulated.as_mut().and_then(|s| s.table_path.as_mut()) {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.decider.policy == Policy::Oracle {
            return Err(Error::Config("the oracle policy is only available in offline replay".into()));
        }
        self.decider.validate()?;
        if self.decider.thresholds.pair != self.pair {
            return Err(Error::Config(format!(
                "thresholds are for {} but the router serves {}",
                self.decider.thresholds.pair, self.pair
            )));
        }
        self.nmt.validate(Backend::Nmt)?;
        self.llm.validate(Backend::Llm)?;
        if let Some(qe) = &self.qe_scorer {
            qe.validate()?;
            if qe.mode != ScoreKind::ReferenceFree {
                return Err(Error::Config("qe_scorer must be reference_free".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RouteError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("decider failed: {0}")]
    Decider(String),
    #[error("{backend} backend failed: {cause}")]
    Backend { backend: Backend, cause: String },
    #[error("{first} backend failed: {first_cause}; fallback to {second} failed: {second_cause}")]
    BothFailed {
        first: Backend,
        first_cause: String,
        second: Backend,
        second_cause: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteOutcome {
    pub translation: String,
    pub decision: RoutingDecision,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub nmt_requests: u64,
    pub llm_requests: u64,
    pub llm_p: f64,
    pub fallbacks: u64,
    pub failed_requests: u64,
    pub nmt_invocations: u64,
    pub llm_invocations: u64,
}

#[derive(Debug, Default)]
struct Metrics {
    nmt: AtomicU64,
    llm: AtomicU64,
    fallbacks: AtomicU64,
    failed: AtomicU64,
}

pub struct Router {
    pair: LanguagePair,
    decider: Decider,
    nmt: BackendClient,
    llm: BackendClient,
    qe: Scorer,
    fallback_enabled: bool,
    metrics: Metrics,
}

impl std::fmt::Debug for Router {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Router")
            .field("pair", &self.pair)
            .field("decider", &self.decider)
            .field("fallback_enabled", &self.fallback_enabled)
            .finish_non_exhaustive()
    }
}

enum Served {
    Ok(String),
    Fallback(Backend, String),
}

impl Router {
    /// Validates the config and loads every artifact. All artifact errors
    /// surface here, never per request.
    pub fn new(config: &RouterConfig) -> Result<Self> {
        config.validate()?;
        let decider = Decider::load(&config.decider)?;
        Self::with_decider(config, decider)
    }

    /// Uses an already loaded decider in place of `config.decider`'s artifacts.
    pub fn with_decider(config: &RouterConfig, decider: Decider) -> Result<Self> {
        if decider.policy() == Policy::Oracle {
            return Err(Error::Config("the oracle policy is only available in offline replay".into()));
        }
        let names = LanguageNames::with_extra(&config.language_names);
        // Resolve both names up front so an unknown code fails at startup.
        names.name(config.pair.source())?;
        names.name(config.pair.target())?;
        let qe = match &config.qe_scorer {
            Some(spec) => Scorer::new(spec.clone())?,
            None => Scorer::builtin(ScoreKind::ReferenceFree),
        };
        Ok(Self {
            pair: config.pair.clone(),
            decider,
            nmt: BackendClient::new(Backend::Nmt, &config.nmt, names.clone())?,
            llm: BackendClient::new(Backend::Llm, &config.llm, names)?,
            qe,
            fallback_enabled: config.fallback_enabled,
            metrics: Metrics::default(),
        })
    }

    pub fn pair(&self) -> &LanguagePair {
        &self.pair
    }

    pub fn decider(&self) -> &Decider {
        &self.decider
    }

    fn client(&self, b: Backend) -> &BackendClient {
        match b {
            Backend::Nmt => &self.nmt,
            Backend::Llm => &self.llm,
        }
    }

    /// Calls `first`; on failure and if enabled, calls the other backend.
    async fn call_with_fallback(
        &self,
        first: Backend,
        segment: &Segment,
        calls: &mut BackendCalls,
    ) -> std::result::Result<Served, RouteError> {
        calls.record(first);
        match self.client(first).translate(segment).await {
            Ok(text) => Ok(Served::Ok(text)),
            Err(e) if !self.fallback_enabled => Err(RouteError::Backend {
                backend: first,
                cause: e.message,
            }),
            Err(e) => {
                let second = first.other();
                tracing::warn!(segment = %segment.id, %first, error = %e, "falling back");
                calls.record(second);
                match self.client(second).translate(segment).await {
                    Ok(text) => Ok(Served::Fallback(second, text)),
                    Err(e2) => Err(RouteError::BothFailed {
                        first,
                        first_cause: e.message,
                        second,
                        second_cause: e2.message,
                    }),
                }
            }
        }
    }

    pub async fn route_segment(&self, segment: &Segment) -> std::result::Result<RouteOutcome, RouteError> {
        let result = self.route_inner(segment).await;
        match &result {
            Ok(out) => {
                match out.decision.backend {
                    Backend::Nmt => self.metrics.nmt.fetch_add(1, Ordering::Relaxed),
                    Backend::Llm => self.metrics.llm.fetch_add(1, Ordering::Relaxed),
                };
                if out.decision.fallback {
                    self.metrics.fallbacks.fetch_add(1, Ordering::Relaxed);
                }
            }
            Err(_) => {
                self.metrics.failed.fetch_add(1, Ordering::Relaxed);
            }
        }
        result
    }

    async fn route_inner(&self, segment: &Segment) -> std::result::Result<RouteOutcome, RouteError> {
        if segment.pair != self.pair {
            return Err(RouteError::BadRequest(format!(
                "router serves {} but request is {}",
                self.pair, segment.pair
            )));
        }
        let start = Instant::now();
        let mut calls = BackendCalls::default();
        let finish = |backend, evidence, calls, fallback, translation| RouteOutcome {
            translation,
            decision: RoutingDecision {
                segment_id: segment.id.clone(),
                backend,
                evidence,
                backend_calls: calls,
                latency_ms: start.elapsed().as_secs_f64() * 1000.0,
                fallback,
            },
        };

        if self.decider.policy() != Policy::Qet {
            let decision = self
                .decider
                .decide(segment, &DecisionContext::default())
                .map_err(|e| RouteError::Decider(e.to_string()))?;
            return Ok(match self.call_with_fallback(decision.backend, segment, &mut calls).await? {
                Served::Ok(text) => finish(decision.backend, decision.evidence, calls, false, text),
                Served::Fallback(b, text) => finish(b, decision.evidence, calls, true, text),
            });
        }

        // qet: NMT first, score it, then the LLM only when the score is low.
        let nmt_text = match self.call_with_fallback(Backend::Nmt, segment, &mut calls).await? {
            Served::Ok(text) => text,
            Served::Fallback(b, text) => return Ok(finish(b, BTreeMap::new(), calls, true, text)),
        };
        let item = ScoreItem::new(&segment.text, &nmt_text, None).with_pair(&segment.pair);
        let qe = match self.qe.score_batch_async(&[item]).await {
            Ok(mut v) => v.remove(0),
            Err(e) if self.fallback_enabled => {
                tracing::warn!(segment = %segment.id, error = %e, "QE failed; serving NMT output");
                return Ok(finish(Backend::Nmt, BTreeMap::new(), calls, true, nmt_text));
            }
            Err(e) => return Err(RouteError::Decider(format!("QE scoring: {e}"))),
        };
        let ctx = DecisionContext {
            qe_score: Some(qe),
            ..Default::default()
        };
        let decision = self
            .decider
            .decide(segment, &ctx)
            .map_err(|e| RouteError::Decider(e.to_string()))?;
        if decision.backend == Backend::Nmt {
            return Ok(finish(Backend::Nmt, decision.evidence, calls, false, nmt_text));
        }
        calls.record(Backend::Llm);
        match self.llm.translate(segment).await {
            Ok(text) => Ok(finish(Backend::Llm, decision.evidence, calls, false, text)),
            Err(e) if self.fallback_enabled => {
                tracing::warn!(segment = %segment.id, error = %e, "LLM failed; serving NMT output");
                Ok(finish(Backend::Nmt, decision.evidence, calls, true, nmt_text))
            }
            Err(e) => Err(RouteError::Backend {
                backend: Backend::Llm,
                cause: e.message,
            }),
        }
    }

    pub fn metrics(&self) -> MetricsSnapshot {
        let nmt = self.metrics.nmt.load(Ordering::Relaxed);
        let llm = self.metrics.llm.load(Ordering::Relaxed);
        let completed = nmt + llm;
        MetricsSnapshot {
            nmt_requests: nmt,
            llm_requests: llm,
            llm_p: if completed == 0 {
                0.0
            } else {
                llm as f64 / completed as f64
            },
            fallbacks: self.metrics.fallbacks.load(Ordering::Relaxed),
            failed_requests: self.metrics.failed.load(Ordering::Relaxed),
            nmt_invocations: self.nmt.invocations(),
            llm_invocations: self.llm.invocations(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::PolicyThresholds;

    fn pair() -> LanguagePair {
        "zh-en".parse().unwrap()
    }

    fn config(policy: Policy) -> RouterConfig {
        let mut t = PolicyThresholds::new(pair(), 0.25);
        t.qet_threshold = Some(50.0);
        RouterConfig {
            pair: pair(),
            decider: DeciderSpec::new(policy, t),
            nmt: BackendSpec::simulated(SimulatedBackendProfile::default()),
            llm: BackendSpec::simulated(SimulatedBackendProfile::default()),
            fallback_enabled: false,
            listen_address: default_listen(),
            qe_scorer: None,
            language_names: BTreeMap::new(),
        }
    }

    fn seg(id: &str) -> Segment {
        Segment::new(id, "你好", pair()).unwrap()
    }

    #[test]
    fn oracle_rejected_at_startup() {
        assert!(matches!(Router::new(&config(Policy::Oracle)), Err(Error::Config(_))));
    }

    #[test]
    fn missing_artifact_is_startup_error() {
        assert!(Router::new(&config(Policy::Jdm)).is_err());
    }

    #[tokio::test]
    async fn single_call_policies() {
        for (policy, backend) in [(Policy::AlwaysNmt, Backend::Nmt), (Policy::AlwaysLlm, Backend::Llm)] {
            let r = Router::new(&config(policy)).unwrap();
            let out = r.route_segment(&seg("a")).await.unwrap();
            assert_eq!(out.decision.backend, backend);
            assert_eq!(out.decision.backend_calls.total(), 1);
            assert!(out.decision.is_consistent());
            assert!(!out.decision.fallback);
        }
    }

    #[tokio::test]
    async fn qet_high_score_keeps_nmt() {
        let mut c = config(Policy::Qet);
        c.decider.thresholds.qet_threshold = Some(-1.0);
        c.nmt.simulated.as_mut().unwrap().table.insert("a".into(), "Hello".into());
        let r = Router::new(&c).unwrap();
        let out = r.route_segment(&seg("a")).await.unwrap();
        assert_eq!(out.translation, "Hello");
        assert_eq!(out.decision.backend_calls, BackendCalls { nmt: 1, llm: 0 });
        assert!(out.decision.evidence.contains_key("qe_nmt"));
    }

    #[tokio::test]
    async fn qet_low_score_returns_llm_text() {
        let mut c = config(Policy::Qet);
        c.decider.thresholds.qet_threshold = Some(101.0);
        c.llm.simulated.as_mut().unwrap().table.insert("a".into(), "Hi there".into());
        let r = Router::new(&c).unwrap();
        let out = r.route_segment(&seg("a")).await.unwrap();
        assert_eq!(out.translation, "Hi there");
        assert_eq!(out.decision.backend, Backend::Llm);
        assert_eq!(out.decision.backend_calls, BackendCalls { nmt: 1, llm: 1 });
    }

    fn failing() -> BackendSpec {
        BackendSpec::simulated(SimulatedBackendProfile {
            failure_rate: 0.999_999_999,
            ..Default::default()
        })
    }

    #[tokio::test]
    async fn fallback_flags_and_both_failures() {
        let mut c = config(Policy::AlwaysLlm);
        c.llm = failing();
        let r = Router::new(&c).unwrap();
        assert!(matches!(r.route_segment(&seg("a")).await, Err(RouteError::Backend { backend: Backend::Llm, .. })));

        c.fallback_enabled = true;
        let r = Router::new(&c).unwrap();
        let out = r.route_segment(&seg("a")).await.unwrap();
        assert!(out.decision.fallback);
        assert_eq!(out.decision.backend, Backend::Nmt);
        assert_eq!(out.decision.backend_calls, BackendCalls { nmt: 1, llm: 1 });
        assert_eq!(r.metrics().fallbacks, 1);

        c.nmt = failing();
        let r = Router::new(&c).unwrap();
        let err = r.route_segment(&seg("a")).await.unwrap_err();
        assert!(matches!(err, RouteError::BothFailed { first: Backend::Llm, second: Backend::Nmt, .. }));
        assert_eq!(r.metrics().failed_requests, 1);
    }

    #[tokio::test]
    async fn wrong_pair_is_bad_request() {
        let r = Router::new(&config(Policy::AlwaysNmt)).unwrap();
        let s = Segment::new("x", "hallo", "de-en".parse().unwrap()).unwrap();
        assert!(matches!(r.route_segment(&s).await, Err(RouteError::BadRequest(_))));
    }

    #[test]
    fn config_json_round_trip() {
        let c = config(Policy::Qet);
        let text = serde_json::to_string_pretty(&c).unwrap();
        let back: RouterConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
