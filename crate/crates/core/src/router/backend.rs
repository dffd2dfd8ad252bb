//! Translation backend clients: HTTP NMT, HTTP LLM and a simulated backend.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::Semaphore;

use super::prompt::{check_template, render_prompt, LanguageNames, DEFAULT_PROMPT_TEMPLATE};
use crate::dataset::{load_dataset, LoadOptions};
use crate::error::{Error, Result};
use crate::types::{Backend, Segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Nmt,
    Llm,
    Simulated,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulatedBackendProfile {
    /// Segment id to hypothesis.
    #[serde(default)]
    pub table: BTreeMap<String, String>,
    /// JSONL dataset supplying hypotheses for this slot (`nmt` or `llm` field).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_path: Option<PathBuf>,
    #[serde(default)]
    pub base_latency_ms: f64,
    #[serde(default)]
    pub failure_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_in_flight() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_template: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulated: Option<SimulatedBackendProfile>,
}

impl BackendSpec {
    pub fn simulated(profile: SimulatedBackendProfile) -> Self {
        Self {
            kind: BackendKind::Simulated,
            endpoint: None,
            timeout_ms: default_timeout_ms(),
            max_in_flight: default_max_in_flight(),
            prompt_template: None,
            simulated: Some(profile),
        }
    }

    pub fn http(kind: BackendKind, endpoint: impl Into<String>) -> Self {
        Self {
            kind,
            endpoint: Some(endpoint.into()),
            simulated: None,
            ..Self::simulated(SimulatedBackendProfile::default())
        }
    }

    pub fn template(&self) -> &str {
        self.prompt_template.as_deref().unwrap_or(DEFAULT_PROMPT_TEMPLATE)
    }

    /// Checks the spec for use in the given slot.
    pub fn validate(&self, slot: Backend) -> Result<()> {
        let ctx = |m: String| Error::Config(format!("{slot} backend: {m}"));
        if self.timeout_ms == 0 || self.max_in_flight == 0 {
            return Err(ctx("timeout_ms and max_in_flight must be positive".into()));
        }
        match (self.kind, slot) {
            (BackendKind::Nmt, Backend::Llm) | (BackendKind::Llm, Backend::Nmt) => {
                return Err(ctx(format!("kind {:?} cannot fill this slot", self.kind)))
            }
            _ => {}
        }
        if self.kind != BackendKind::Simulated && self.endpoint.is_none() {
            return Err(ctx("endpoint is required".into()));
        }
        if self.kind == BackendKind::Simulated {
            let p = self
                .simulated
                .as_ref()
                .ok_or_else(|| ctx("simulated profile is required".into()))?;
            if !(0.0..1.0).contains(&p.failure_rate) {
                return Err(ctx(format!("failure_rate {} must lie in [0, 1)", p.failure_rate)));
            }
            if !(p.base_latency_ms >= 0.0 && p.base_latency_ms.is_finite()) {
                return Err(ctx("base_latency_ms must be non-negative".into()));
            }
        }
        if slot == Backend::Llm {
            check_template(self.template())?;
        }
        Ok(())
    }
}

/// Failure of a single backend call.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct BackendError {
    pub message: String,
}

impl BackendError {
    fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }
}

/// Uniform draw in [0, 1) from (seed, role, id, salt).
fn unit_hash(seed: u64, role: Backend, id: &str, salt: &str) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(role.to_string().as_bytes());
    h.update([0]);
    h.update(id.as_bytes());
    h.update([0]);
    h.update(salt.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(bytes) >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Debug)]
struct Simulated {
    by_id: BTreeMap<String, String>,
    by_src: BTreeMap<String, String>,
    profile: SimulatedBackendProfile,
}

#[derive(Debug)]
enum Transport {
    Simulated(Simulated),
    Nmt { url: String, client: reqwest::Client },
    Llm { url: String, client: reqwest::Client },
}

#[derive(Serialize)]
struct NmtRequest<'a> {
    src: &'a str,
    source_lang: &'a str,
    target_lang: &'a str,
}

#[derive(Deserialize)]
struct NmtResponse {
    translation: String,
}

#[derive(Serialize)]
struct LlmRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct LlmResponse {
    #[serde(alias = "translation", alias = "output")]
    text: String,
}

/// One configured backend with an in-flight bound and an invocation counter.
#[derive(Debug)]
pub struct BackendClient {
    role: Backend,
    transport: Transport,
    template: String,
    names: LanguageNames,
    permits: Semaphore,
    invocations: AtomicU64,
}

fn join_url(endpoint: &str, path: &str) -> String {
    if endpoint.ends_with(path) {
        endpoint.to_owned()
    } else {
        format!("{}{path}", endpoint.trim_end_matches('/'))
    }
}

impl BackendClient {
    pub fn new(role: Backend, spec: &BackendSpec, names: LanguageNames) -> Result<Self> {
        spec.validate(role)?;
        let transport = match spec.kind {
            BackendKind::Simulated => {
                let profile = spec.simulated.clone().unwrap_or_default();
                let mut by_id = BTreeMap::new();
                let mut by_src = BTreeMap::new();
                if let Some(path) = &profile.table_path {
                    let data = load_dataset(path, &LoadOptions::strict())?;
                    for r in data.records {
                        if let Some(h) = r.hypothesis(role) {
                            by_src.entry(r.segment.text.clone()).or_insert_with(|| h.to_owned());
                            by_id.insert(r.segment.id.clone(), h.to_owned());
                        }
                    }
                }
                by_id.extend(profile.table.iter().map(|(k, v)| (k.clone(), v.clone())));
                Transport::Simulated(Simulated {
                    by_id,
                    by_src,
                    profile,
                })
            }
            kind => {
                let client = reqwest::Client::builder()
                    .timeout(Duration::from_millis(spec.timeout_ms))
                    .build()
                    .map_err(|e| Error::Config(format!("building {role} client: {e}")))?;
                let endpoint = spec.endpoint.as_deref().unwrap_or_default();
                if kind == BackendKind::Nmt {
                    Transport::Nmt {
                        url: join_url(endpoint, "/translate"),
                        client,
                    }
                } else {
                    Transport::Llm {
                        url: join_url(endpoint, "/generate"),
                        client,
                    }
                }
            }
        };
        Ok(Self {
            role,
            transport,
            template: spec.template().to_owned(),
            names,
            permits: Semaphore::new(spec.max_in_flight),
            invocations: AtomicU64::new(0),
        })
    }

    pub fn role(&self) -> Backend {
        self.role
    }

    pub fn invocations(&self) -> u64 {
        self.invocations.load(Ordering::Relaxed)
    }

    pub async fn translate(&self, segment: &Segment) -> std::result::Result<String, BackendError> {
        let _permit = self
            .permits
            .acquire()
            .await
            .map_err(|_| BackendError::new("backend is shutting down"))?;
        self.invocations.fetch_add(1, Ordering::Relaxed);
        let prompt = if self.role == Backend::Llm {
            Some(
                render_prompt(&self.template, &segment.pair, &segment.text, &self.names)
                    .map_err(|e| BackendError::new(e.to_string()))?,
            )
        } else {
            None
        };
        match &self.transport {
            Transport::Simulated(sim) => self.simulate(sim, segment).await,
            Transport::Nmt { url, client } => {
                let body = NmtRequest {
                    src: &segment.text,
                    source_lang: segment.pair.source(),
                    target_lang: segment.pair.target(),
                };
                let resp: NmtResponse = post_json(client, url, &body).await?;
                Ok(resp.translation)
            }
            Transport::Llm { url, client } => {
                let body = LlmRequest {
                    prompt: prompt.as_deref().unwrap_or_default(),
                };
                let resp: LlmResponse = post_json(client, url, &body).await?;
                Ok(resp.text.trim().to_owned())
            }
        }
    }

    async fn simulate(&self, sim: &Simulated, segment: &Segment) -> std::result::Result<String, BackendError> {
        let p = &sim.profile;
        if p.base_latency_ms > 0.0 {
            let jitter = 0.5 + unit_hash(p.seed, self.role, &segment.id, "latency");
            tokio::time::sleep(Duration::from_secs_f64(p.base_latency_ms * jitter / 1000.0)).await;
        }
        if p.failure_rate > 0.0 && unit_hash(p.seed, self.role, &segment.id, "failure") < p.failure_rate {
            return Err(BackendError::new(format!(
                "simulated {} failure for segment {}",
                self.role, segment.id
            )));
        }
        Ok(sim
            .by_id
            .get(&segment.id)
            .or_else(|| sim.by_src.get(&segment.text))
            .cloned()
            .unwrap_or_else(|| format!("[{}] {}", self.role, segment.text)))
    }
}

async fn post_json<B: Serialize, R: for<'de> Deserialize<'de>>(
    client: &reqwest::Client,
    url: &str,
    body: &B,
) -> std::result::Result<R, BackendError> {
    let resp = client
        .post(url)
        .json(body)
        .send()
        .await
        .map_err(|e| {
            if e.is_timeout() {
                BackendError::new(format!("{url} timed out"))
            } else {
                BackendError::new(format!("{url}: {e}"))
            }
        })?;
    let status = resp.status();
    let bytes = resp
        .bytes()
        .await
        .map_err(|e| BackendError::new(format!("{url}: {e}")))?;
    if !status.is_success() {
        return Err(BackendError::new(format!(
            "{url}: HTTP {status}: {}",
            String::from_utf8_lossy(&bytes)
        )));
    }
    serde_json::from_slice(&bytes).map_err(|e| BackendError::new(format!("{url}: malformed response: {e}")))
}
