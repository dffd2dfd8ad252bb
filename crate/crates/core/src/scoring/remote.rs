use serde::{Deserialize, Serialize};

use super::{ScoreItem, ScorerSpec};
use crate::error::{Error, Result};
use crate::types::{QualityScore, ScoreKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireItem {
    pub src: String,
    pub hyp: String,
    #[serde(rename = "ref", default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub mode: ScoreKind,
    pub items: Vec<WireItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<f64>,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

#[derive(Debug, Clone)]
pub(super) struct RemoteScorer {
    url: String,
    client: reqwest::Client,
    max_retries: u32,
    batch_size: usize,
}

enum Attempt {
    Retryable(Error),
    Fatal(Error),
}

impl RemoteScorer {
    pub(super) fn new(spec: &ScorerSpec) -> Result<Self> {
        let base = spec
            .endpoint
            .as_deref()
            .ok_or_else(|| Error::Config("remote scorer needs an endpoint".into()))?;
        let url = if base.ends_with("/score") {
            base.to_owned()
        } else {
            format!("{}/score", base.trim_end_matches('/'))
        };
        let client = reqwest::Client::builder()
            .timeout(super::timeout(spec))
            .build()
            .map_err(|e| Error::Config(format!("building scorer client: {e}")))?;
        Ok(Self {
            url,
            client,
            max_retries: spec.max_retries,
            batch_size: spec.batch_size,
        })
    }

    fn scorer_error(&self, message: impl Into<String>) -> Error {
        Error::Scorer {
            endpoint: self.url.clone(),
            message: message.into(),
        }
    }

    async fn attempt(&self, request: &ScoreRequest) -> std::result::Result<Vec<f64>, Attempt> {
        let response = self
            .client
            .post(&self.url)
            .json(request)
            .send()
            .await
            .map_err(|e| {
                if e.is_timeout() {
                    Attempt::Retryable(Error::ScorerTimeout {
                        endpoint: self.url.clone(),
                    })
                } else {
                    Attempt::Retryable(self.scorer_error(e.to_string()))
                }
            })?;
        let status = response.status();
        let body = response.bytes().await.map_err(|e| {
            if e.is_timeout() {
                Attempt::Retryable(Error::ScorerTimeout {
                    endpoint: self.url.clone(),
                })
            } else {
                Attempt::Retryable(self.scorer_error(e.to_string()))
            }
        })?;
        if !status.is_success() {
            let detail = serde_json::from_slice::<ErrorBody>(&body)
                .map(|b| b.error)
                .unwrap_or_else(|_| String::from_utf8_lossy(&body).into_owned());
            let err = self.scorer_error(format!("HTTP {status}: {detail}"));
            return Err(if status.is_server_error() {
                Attempt::Retryable(err)
            } else {
                Attempt::Fatal(err)
            });
        }
        let parsed: ScoreResponse = serde_json::from_slice(&body)
            .map_err(|e| Attempt::Fatal(self.scorer_error(format!("malformed response: {e}"))))?;
        if parsed.scores.len() != request.items.len() {
            return Err(Attempt::Fatal(self.scorer_error(format!(
                "malformed response: {} scores for {} items",
                parsed.scores.len(),
                request.items.len()
            ))));
        }
        if let Some(bad) = parsed
            .scores
            .iter()
            .find(|s| !(s.is_finite() && (0.0..=100.0).contains(*s)))
        {
            return Err(Attempt::Fatal(self.scorer_error(format!(
                "malformed response: score {bad} outside [0, 100]"
            ))));
        }
        Ok(parsed.scores)
    }

    async fn send(&self, request: &ScoreRequest) -> Result<Vec<f64>> {
        let mut attempt = 0;
        loop {
            match self.attempt(request).await {
                Ok(scores) => return Ok(scores),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retryable(e)) if attempt >= self.max_retries => return Err(e),
                Err(Attempt::Retryable(e)) => {
                    tracing::warn!(endpoint = %self.url, attempt, error = %e, "retrying scorer request");
                    attempt += 1;
                }
            }
        }
    }

    pub(super) async fn score(
        &self,
        mode: ScoreKind,
        items: &[ScoreItem<'_>],
    ) -> Result<Vec<QualityScore>> {
        let mut out = Vec::with_capacity(items.len());
        for (chunk_no, chunk) in items.chunks(self.batch_size).enumerate() {
            let request = ScoreRequest {
                mode,
                items: chunk
                    .iter()
                    .map(|i| WireItem {
                        src: i.src.to_owned(),
                        hyp: i.hyp.to_owned(),
                        reference: i.reference.map(str::to_owned),
                    })
                    .collect(),
            };
            let scores = self.send(&request).await.map_err(|e| Error::AtItem {
                index: chunk_no * self.batch_size,
                source: Box::new(e),
            })?;
            for value in scores {
                out.push(QualityScore::new(value, mode)?);
            }
        }
        Ok(out)
    }

    /// Runs the async client on a private current-thread runtime. When called
    /// from inside a runtime, the work moves to a scoped thread so the caller's
    /// executor is never blocked re-entrantly.
    pub(super) fn score_blocking(
        &self,
        mode: ScoreKind,
        items: &[ScoreItem<'_>],
    ) -> Result<Vec<QualityScore>> {
        let run = || -> Result<Vec<QualityScore>> {
            let rt = tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .map_err(|e| Error::Config(format!("starting scorer runtime: {e}")))?;
            rt.block_on(self.score(mode, items))
        };
        if tokio::runtime::Handle::try_current().is_ok() {
            std::thread::scope(|s| s.spawn(run).join())
                .unwrap_or_else(|_| Err(self.scorer_error("scorer thread panicked")))
        } else {
            run()
        }
    }
}
