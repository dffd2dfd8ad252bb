//! Quality scoring in reference-based and reference-free (QE) modes.
//!
//! The builtin backend uses chrF for reference-based scoring and a
//! length/script heuristic for QE. The remote backend speaks a small JSON
//! protocol so real neural metrics can be served from another process:
//!
//! ```text
//! POST /score {"mode": "reference_based"|"reference_free",
//!              "items": [{"src": .., "hyp": .., "ref": ..}]}
//!   200 -> {"scores": [0..100, ...]}
//!   4xx/5xx -> {"error": ".."}
//! ```

pub mod chrf;
pub mod contract;
pub mod qe;
mod remote;
pub mod service;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{LanguagePair, QualityScore, ScoreKind};

pub use remote::{ScoreRequest, ScoreResponse, WireItem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScorerBackend {
    #[serde(rename = "builtin_chrf", alias = "builtin")]
    Builtin,
    #[serde(rename = "remote")]
    Remote,
}

fn default_timeout_ms() -> u64 {
    10_000
}

fn default_batch_size() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerSpec {
    pub mode: ScoreKind,
    pub backend: ScorerBackend,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Extra attempts after a transport failure or 5xx.
    #[serde(default)]
    pub max_retries: u32,
    /// Items per remote request.
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

impl ScorerSpec {
    pub fn builtin(mode: ScoreKind) -> Self {
        Self {
            mode,
            backend: ScorerBackend::Builtin,
            endpoint: None,
            timeout_ms: default_timeout_ms(),
            max_retries: 0,
            batch_size: default_batch_size(),
        }
    }

    pub fn remote(mode: ScoreKind, endpoint: impl Into<String>) -> Self {
        Self {
            backend: ScorerBackend::Remote,
            endpoint: Some(endpoint.into()),
            ..Self::builtin(mode)
        }
    }

    /// Same backend and endpoint, different mode.
    pub fn with_mode(&self, mode: ScoreKind) -> Self {
        Self {
            mode,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.backend, &self.endpoint) {
            (ScorerBackend::Remote, None) => {
                return Err(Error::Config("remote scorer needs an endpoint".into()))
            }
            (ScorerBackend::Builtin, Some(_)) => {
                return Err(Error::Config("builtin scorer takes no endpoint".into()))
            }
            _ => {}
        }
        if self.timeout_ms == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "scorer timeout_ms and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One (source, hypothesis, reference) triple to score.
#[derive(Debug, Clone, Copy)]
pub struct ScoreItem<'a> {
    pub src: &'a str,
    pub hyp: &'a str,
    pub reference: Option<&'a str>,
    /// Used by the builtin QE heuristic; never sent over the wire.
    pub pair: Option<&'a LanguagePair>,
}

impl<'a> ScoreItem<'a> {
    pub fn new(src: &'a str, hyp: &'a str, reference: Option<&'a str>) -> Self {
        Self {
            src,
            hyp,
            reference,
            pair: None,
        }
    }

    pub fn with_pair(mut self, pair: &'a LanguagePair) -> Self {
        self.pair = Some(pair);
        self
    }
}

fn check_item(mode: ScoreKind, item: &ScoreItem<'_>) -> Result<()> {
    match (mode, item.reference) {
        (ScoreKind::ReferenceBased, None) => {
            Err(Error::invalid("reference-based scoring requires a reference"))
        }
        (ScoreKind::ReferenceFree, Some(_)) => {
            Err(Error::invalid("reference-free scoring must not be given a reference"))
        }
        _ => Ok(()),
    }
}

/// A ready-to-use scorer built from a [`ScorerSpec`].
#[derive(Debug, Clone)]
pub struct Scorer {
    spec: ScorerSpec,
    remote: Option<remote::RemoteScorer>,
}

impl Scorer {
    pub fn new(spec: ScorerSpec) -> Result<Self> {
        spec.validate()?;
        let remote = match spec.backend {
            ScorerBackend::Remote => Some(remote::RemoteScorer::new(&spec)?),
            ScorerBackend::Builtin => None,
        };
        Ok(Self { spec, remote })
    }

    pub fn builtin(mode: ScoreKind) -> Self {
        Self {
            spec: ScorerSpec::builtin(mode),
            remote: None,
        }
    }

    pub fn spec(&self) -> &ScorerSpec {
        &self.spec
    }

    pub fn mode(&self) -> ScoreKind {
        self.spec.mode
    }

    fn score_builtin(&self, item: &ScoreItem<'_>) -> f64 {
        match self.spec.mode {
            ScoreKind::ReferenceBased => chrf::chrf(item.hyp, item.reference.unwrap_or("")),
            ScoreKind::ReferenceFree => qe::qe_score(item.src, item.hyp, item.pair),
        }
    }

    pub fn score(&self, item: &ScoreItem<'_>) -> Result<QualityScore> {
        let mut out = self.score_batch(std::slice::from_ref(item))?;
        Ok(out.remove(0))
    }

    /// Scores items in order. Remote failures carry the index of the first
    /// item of the failing request.
    pub fn score_batch(&self, items: &[ScoreItem<'_>]) -> Result<Vec<QualityScore>> {
        for (index, item) in items.iter().enumerate() {
            check_item(self.spec.mode, item).map_err(|e| Error::AtItem {
                index,
                source: Box::new(e),
            })?;
        }
        match &self.remote {
            None => items
                .iter()
                .map(|item| QualityScore::new(self.score_builtin(item), self.spec.mode))
                .collect(),
            Some(client) => client.score_blocking(self.spec.mode, items),
        }
    }

    pub async fn score_batch_async(&self, items: &[ScoreItem<'_>]) -> Result<Vec<QualityScore>> {
        match &self.remote {
            None => self.score_batch(items),
            Some(client) => {
                for (index, item) in items.iter().enumerate() {
                    check_item(self.spec.mode, item).map_err(|e| Error::AtItem {
                        index,
                        source: Box::new(e),
                    })?;
                }
                client.score(self.spec.mode, items).await
            }
        }
    }
}

/// Scores a single triple with a freshly built scorer.
pub fn score(spec: &ScorerSpec, item: &ScoreItem<'_>) -> Result<QualityScore> {
    Scorer::new(spec.clone())?.score(item)
}

pub fn score_batch(spec: &ScorerSpec, items: &[ScoreItem<'_>]) -> Result<Vec<QualityScore>> {
    Scorer::new(spec.clone())?.score_batch(items)
}

pub(crate) fn timeout(spec: &ScorerSpec) -> Duration {
    Duration::from_millis(spec.timeout_ms)
}
