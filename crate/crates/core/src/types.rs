//! Domain types shared across calibration, routing and replay.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Source/target language codes, written `zh-en` on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguagePair {
    source: String,
    target: String,
}

impl LanguagePair {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Result<Self> {
        let source = source.into().trim().to_ascii_lowercase();
        let target = target.into().trim().to_ascii_lowercase();
        if source.is_empty() || target.is_empty() {
            return Err(Error::invalid("language codes must be non-empty"));
        }
        if source == target {
            return Err(Error::invalid(format!(
                "source and target language are both {source:?}"
            )));
        }
        Ok(Self { source, target })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn target(&self) -> &str {
        &self.target
    }
}

impl fmt::Display for LanguagePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.source, self.target)
    }
}

impl FromStr for LanguagePair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (src, tgt) = s
            .split_once(['-', '_'])
            .ok_or_else(|| Error::invalid(format!("language pair {s:?} is not of the form xx-yy")))?;
        LanguagePair::new(src, tgt)
    }
}

impl TryFrom<String> for LanguagePair {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<LanguagePair> for String {
    fn from(pair: LanguagePair) -> String {
        pair.to_string()
    }
}

/// One source sentence to translate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub text: String,
    pub pair: LanguagePair,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub annotations: BTreeMap<String, String>,
}

impl Segment {
    pub fn new(id: impl Into<String>, text: impl Into<String>, pair: LanguagePair) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::invalid("segment text is empty"));
        }
        Ok(Self {
            id: id.into(),
            text,
            pair,
            annotations: BTreeMap::new(),
        })
    }

    pub fn with_annotation(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.annotations.insert(key.into(), value.into());
        self
    }

    pub fn annotation(&self, key: &str) -> Option<&str> {
        self.annotations.get(key).map(String::as_str)
    }
}

/// Whether a score was computed against a reference translation or from
/// the source and hypothesis alone (quality estimation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    ReferenceBased,
    ReferenceFree,
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreKind::ReferenceBased => "reference_based",
            ScoreKind::ReferenceFree => "reference_free",
        })
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference_based" | "ref" | "da" => Ok(ScoreKind::ReferenceBased),
            "reference_free" | "qe" => Ok(ScoreKind::ReferenceFree),
            other => Err(Error::invalid(format!("unknown score kind {other:?}"))),
        }
    }
}

/// A translation quality score on a 0-100 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub value: f64,
    pub kind: ScoreKind,
}

impl QualityScore {
    pub fn new(value: f64, kind: ScoreKind) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::invalid(format!("quality score {value} is not finite")));
        }
        Ok(Self { value, kind })
    }

    pub fn reference_based(value: f64) -> Result<Self> {
        Self::new(value, ScoreKind::ReferenceBased)
    }

    pub fn reference_free(value: f64) -> Result<Self> {
        Self::new(value, ScoreKind::ReferenceFree)
    }
}

/// A segment joined with its reference, both candidate translations and
/// whatever scores are already known. Hypotheses are optional so that
/// monolingual or partially prepared datasets load without fabrication.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub segment: Segment,
    pub reference: Option<String>,
    pub nmt_hyp: Option<String>,
    pub llm_hyp: Option<String>,
    pub q_nmt: Option<QualityScore>,
    pub q_llm: Option<QualityScore>,
    pub qe_nmt: Option<QualityScore>,
}

impl EvalRecord {
    pub fn new(segment: Segment) -> Self {
        Self {
            segment,
            reference: None,
            nmt_hyp: None,
            llm_hyp: None,
            q_nmt: None,
            q_llm: None,
            qe_nmt: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.segment.id
    }

    pub fn hypothesis(&self, backend: Backend) -> Option<&str> {
        match backend {
            Backend::Nmt => self.nmt_hyp.as_deref(),
            Backend::Llm => self.llm_hyp.as_deref(),
        }
    }

    pub fn quality(&self, backend: Backend) -> Option<QualityScore> {
        match backend {
            Backend::Nmt => self.q_nmt,
            Backend::Llm => self.q_llm,
        }
    }

    /// Checks the cross-field invariants.
    pub fn validate(&self) -> Result<()> {
        if let (Some(a), Some(b)) = (self.q_nmt, self.q_llm) {
            if a.kind != b.kind {
                return Err(Error::invalid(format!(
                    "record {}: q_nmt is {} but q_llm is {}",
                    self.id(),
                    a.kind,
                    b.kind
                )));
            }
        }
        let needs_ref = [self.q_nmt, self.q_llm, self.qe_nmt]
            .iter()
            .flatten()
            .any(|q| q.kind == ScoreKind::ReferenceBased);
        if needs_ref && self.reference.is_none() {
            return Err(Error::invalid(format!(
                "record {}: reference-based score present without a reference",
                self.id()
            )));
        }
        if let Some(qe) = self.qe_nmt {
            if qe.kind != ScoreKind::ReferenceFree {
                return Err(Error::invalid(format!(
                    "record {}: qe_nmt must be a reference-free score",
                    self.id()
                )));
            }
        }
        Ok(())
    }
}

/// The two translation backends a decider chooses between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Backend {
    #[serde(rename = "NMT")]
    Nmt,
    #[serde(rename = "LLM")]
    Llm,
}

impl Backend {
    pub fn other(self) -> Backend {
        match self {
            Backend::Nmt => Backend::Llm,
            Backend::Llm => Backend::Nmt,
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Nmt => "NMT",
            Backend::Llm => "LLM",
        })
    }
}

/// Number of times each backend was invoked for one segment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendCalls {
    #[serde(rename = "NMT")]
    pub nmt: u8,
    #[serde(rename = "LLM")]
    pub llm: u8,
}

impl BackendCalls {
    pub fn get(&self, backend: Backend) -> u8 {
        match backend {
            Backend::Nmt => self.nmt,
            Backend::Llm => self.llm,
        }
    }

    pub fn record(&mut self, backend: Backend) {
        match backend {
            Backend::Nmt => self.nmt += 1,
            Backend::Llm => self.llm += 1,
        }
    }

    pub fn total(&self) -> u32 {
        u32::from(self.nmt) + u32::from(self.llm)
    }
}

/// What the router (or replay) did with one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub segment_id: String,
    /// Backend whose translation was returned.
    pub backend: Backend,
    pub evidence: BTreeMap<String, f64>,
    pub backend_calls: BackendCalls,
    pub latency_ms: f64,
    #[serde(default)]
    pub fallback: bool,
}

impl RoutingDecision {
    /// Every backend was called at most once and the returned backend exactly once.
    pub fn is_consistent(&self) -> bool {
        self.backend_calls.nmt <= 1
            && self.backend_calls.llm <= 1
            && self.backend_calls.get(self.backend) == 1
            && self.latency_ms >= 0.0
    }
}

/// Arithmetic mean of same-kind scores.
pub fn mean_quality<'a, I>(scores: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a QualityScore>,
{
    let mut kind = None;
    let mut sum = 0.0;
    let mut n = 0usize;
    for score in scores {
        match kind {
            None => kind = Some(score.kind),
            Some(k) if k != score.kind => return Err(Error::MixedScoreKinds),
            Some(_) => {}
        }
        sum += score.value;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("no scores to average"));
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rb(v: f64) -> QualityScore {
        QualityScore::reference_based(v).unwrap()
    }

    #[test]
    fn pair_parsing() {
        let pair: LanguagePair = "zh-en".parse().unwrap();
        assert_eq!(pair.source(), "zh");
        assert_eq!(pair.target(), "en");
        assert_eq!(pair.to_string(), "zh-en");
        assert!("en-en".parse::<LanguagePair>().is_err());
        assert!("-en".parse::<LanguagePair>().is_err());
        assert!("zhen".parse::<LanguagePair>().is_err());
    }

    #[test]
    fn segment_rejects_blank_text() {
        let pair: LanguagePair = "de-en".parse().unwrap();
        assert!(Segment::new("1", "   \t", pair.clone()).is_err());
        assert!(Segment::new("1", "Hallo", pair).is_ok());
    }

    #[test]
    fn mean_of_singleton() {
        assert_eq!(mean_quality(&[rb(80.21)]).unwrap(), 80.21);
    }

    #[test]
    fn mean_of_two() {
        let m = mean_quality(&[rb(80.21), rb(73.22)]).unwrap();
        assert!((m - 76.715).abs() < 1e-12);
    }

    #[test]
    fn mean_rejects_mixed_and_empty() {
        let qe = QualityScore::reference_free(50.0).unwrap();
        assert!(matches!(
            mean_quality(&[rb(1.0), qe]),
            Err(Error::MixedScoreKinds)
        ));
        assert!(matches!(mean_quality(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn non_finite_scores_rejected() {
        assert!(QualityScore::reference_based(f64::NAN).is_err());
        assert!(QualityScore::reference_free(f64::INFINITY).is_err());
    }

    #[test]
    fn decision_consistency() {
        let mut calls = BackendCalls::default();
        calls.record(Backend::Llm);
        let d = RoutingDecision {
            segment_id: "a".into(),
            backend: Backend::Llm,
            evidence: BTreeMap::new(),
            backend_calls: calls,
            latency_ms: 0.0,
            fallback: false,
        };
        assert!(d.is_consistent());
        let wrong = RoutingDecision {
            backend: Backend::Nmt,
            ..d
        };
        assert!(!wrong.is_consistent());
    }

    proptest::proptest! {
        #[test]
        fn mean_is_permutation_invariant(
            mut values in proptest::collection::vec(0.0f64..100.0, 1..50),
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let scores: Vec<_> = values.iter().map(|&v| rb(v)).collect();
            let a = mean_quality(&scores).unwrap();
            values.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let shuffled: Vec<_> = values.iter().map(|&v| rb(v)).collect();
            let b = mean_quality(&shuffled).unwrap();
            proptest::prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
