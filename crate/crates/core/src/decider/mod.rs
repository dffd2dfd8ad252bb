//! Routing policies behind a single `decide` call.

pub mod features;
pub mod linear;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calibration::PolicyThresholds;
use crate::error::{Error, Result};
use crate::ngram::{load_lm, LanguageModel};
use crate::types::{Backend, QualityScore, Segment};

pub use features::{extract_features, FeatureVector, FEATURE_NAMES};
pub use linear::{
    fit_logistic, logistic_loss_and_grad, sigmoid, train_linear_decider, FeatureScaling,
    LinearDecider, TrainOptions, TrainingProvenance,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    AlwaysNmt,
    AlwaysLlm,
    Qet,
    Pplt,
    Jdm,
    Oracle,
}

impl Policy {
    pub const ALL: [Policy; 6] = [
        Policy::AlwaysNmt,
        Policy::AlwaysLlm,
        Policy::Qet,
        Policy::Pplt,
        Policy::Jdm,
        Policy::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::AlwaysNmt => "always_nmt",
            Policy::AlwaysLlm => "always_llm",
            Policy::Qet => "qet",
            Policy::Pplt => "pplt",
            Policy::Jdm => "jdm",
            Policy::Oracle => "oracle",
        }
    }

    /// Policies that decide from the source sentence alone.
    pub fn is_source_only(self) -> bool {
        matches!(
            self,
            Policy::AlwaysNmt | Policy::AlwaysLlm | Policy::Pplt | Policy::Jdm
        )
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s.replace('-', "_"))
            .ok_or_else(|| Error::invalid(format!("unknown policy {s:?}")))
    }
}

fn default_boundary() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeciderSpec {
    pub policy: Policy,
    pub thresholds: PolicyThresholds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lm_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier_path: Option<PathBuf>,
    #[serde(default = "default_boundary")]
    pub decision_boundary: f64,
}

impl DeciderSpec {
    pub fn new(policy: Policy, thresholds: PolicyThresholds) -> Self {
        Self {
            policy,
            thresholds,
            lm_path: None,
            classifier_path: None,
            decision_boundary: default_boundary(),
        }
    }

    /// Makes relative artifact paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.lm_path, &mut self.classifier_path].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate()?;
        if !(self.decision_boundary > 0.0 && self.decision_boundary < 1.0) {
            return Err(Error::Config(format!(
                "decision_boundary {} must lie in (0, 1)",
                self.decision_boundary
            )));
        }
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("policy {} requires {what}", self.policy)))
            }
        };
        match self.policy {
            Policy::Qet => need(self.thresholds.qet_threshold.is_some(), "thresholds.qet_threshold"),
            Policy::Pplt => {
                need(self.thresholds.pplt_threshold.is_some(), "thresholds.pplt_threshold")?;
                need(self.lm_path.is_some(), "lm_path")
            }
            Policy::Jdm => {
                need(self.lm_path.is_some(), "lm_path")?;
                need(self.classifier_path.is_some(), "classifier_path")
            }
            _ => Ok(()),
        }
    }
}

/// Scores available to a decision beyond the source sentence.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DecisionContext {
    pub qe_score: Option<QualityScore>,
    pub q_nmt: Option<QualityScore>,
    pub q_llm: Option<QualityScore>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub backend: Backend,
    pub evidence: BTreeMap<String, f64>,
}

impl Decision {
    fn new(backend: Backend, evidence: &[(&str, f64)]) -> Self {
        Self {
            backend,
            evidence: evidence.iter().map(|(k, v)| ((*k).to_owned(), *v)).collect(),
        }
    }
}

/// A policy with all of its artifacts loaded. Cheap to clone and safe to
/// share across tasks.
#[derive(Clone)]
pub struct Decider {
    policy: Policy,
    thresholds: PolicyThresholds,
    decision_boundary: f64,
    lm: Option<Arc<dyn LanguageModel>>,
    classifier: Option<Arc<LinearDecider>>,
}

impl fmt::Debug for Decider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Decider")
            .field("policy", &self.policy)
            .field("thresholds", &self.thresholds)
            .field("decision_boundary", &self.decision_boundary)
            .field("lm", &self.lm.is_some())
            .field("classifier", &self.classifier)
            .finish()
    }
}

impl Decider {
    /// Loads the artifacts named by `spec`.
    pub fn load(spec: &DeciderSpec) -> Result<Self> {
        spec.validate()?;
        let lm: Option<Arc<dyn LanguageModel>> = match &spec.lm_path {
            Some(p) if matches!(spec.policy, Policy::Pplt | Policy::Jdm) => {
                Some(Arc::new(load_lm(p)?))
            }
            _ => None,
        };
        let classifier = match &spec.classifier_path {
            Some(p) if spec.policy == Policy::Jdm => Some(LinearDecider::load(p)?),
            _ => None,
        };
        Self::from_parts(
            spec.policy,
            spec.thresholds.clone(),
            spec.decision_boundary,
            lm,
            classifier,
        )
    }

    /// Builds a decider from in-memory artifacts.
    pub fn from_parts(
        policy: Policy,
        thresholds: PolicyThresholds,
        decision_boundary: f64,
        lm: Option<Arc<dyn LanguageModel>>,
        classifier: Option<LinearDecider>,
    ) -> Result<Self> {
        thresholds.validate()?;
        if !(0.0..=1.0).contains(&decision_boundary) {
            return Err(Error::Config(format!(
                "decision_boundary {decision_boundary} must lie in [0, 1]"
            )));
        }
        let missing = |what: &'static str| Error::MissingContext {
            policy: policy.name(),
            what,
        };
        match policy {
            Policy::Qet if thresholds.qet_threshold.is_none() => return Err(missing("a qet threshold")),
            Policy::Pplt if thresholds.pplt_threshold.is_none() => {
                return Err(missing("a pplt threshold"))
            }
            Policy::Pplt | Policy::Jdm if lm.is_none() => return Err(missing("a language model")),
            Policy::Jdm => match &classifier {
                None => return Err(missing("a classifier")),
                Some(c) => {
                    c.validate()?;
                    if c.feature_names.iter().map(String::as_str).ne(FEATURE_NAMES) {
                        return Err(Error::Config(format!(
                            "classifier features {:?} do not match {:?}",
                            c.feature_names, FEATURE_NAMES
                        )));
                    }
                }
            },
            _ => {}
        }
        Ok(Self {
            policy,
            thresholds,
            decision_boundary,
            lm,
            classifier: classifier.map(Arc::new),
        })
    }

    pub fn simple(policy: Policy, thresholds: PolicyThresholds) -> Result<Self> {
        Self::from_parts(policy, thresholds, default_boundary(), None, None)
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn thresholds(&self) -> &PolicyThresholds {
        &self.thresholds
    }

    pub fn decision_boundary(&self) -> f64 {
        self.decision_boundary
    }

    pub fn lm(&self) -> Option<&Arc<dyn LanguageModel>> {
        self.lm.as_ref()
    }

    pub fn classifier(&self) -> Option<&LinearDecider> {
        self.classifier.as_deref()
    }

    /// The policy's control value: the threshold for qet/pplt, the boundary for jdm.
    pub fn control(&self) -> Option<f64> {
        match self.policy {
            Policy::Qet => self.thresholds.qet_threshold,
            Policy::Pplt => self.thresholds.pplt_threshold,
            Policy::Jdm => Some(self.decision_boundary),
            _ => None,
        }
    }

    /// Copy with a different control value. Infinite thresholds are allowed;
    /// the jdm boundary may be anywhere in [0, 1].
    pub fn with_control(&self, value: f64) -> Result<Self> {
        let mut next = self.clone();
        match self.policy {
            Policy::Qet if !value.is_nan() => next.thresholds.qet_threshold = Some(value),
            Policy::Pplt if !value.is_nan() => next.thresholds.pplt_threshold = Some(value),
            Policy::Jdm if (0.0..=1.0).contains(&value) => next.decision_boundary = value,
            _ => {
                return Err(Error::invalid(format!(
                    "control value {value} is not valid for policy {}",
                    self.policy
                )))
            }
        }
        Ok(next)
    }

    pub fn classifier_probability(&self, text: &str) -> Result<f64> {
        let (lm, clf) = match (&self.lm, &self.classifier) {
            (Some(lm), Some(c)) => (lm, c),
            _ => return Err(Error::MissingContext {
                policy: self.policy.name(),
                what: "a loaded classifier and language model",
            }),
        };
        let x = extract_features(text, lm.as_ref())?;
        Ok(clf.probability(&x.values))
    }

    pub fn decide(&self, segment: &Segment, ctx: &DecisionContext) -> Result<Decision> {
        let missing = |what: &'static str| Error::MissingContext {
            policy: self.policy.name(),
            what,
        };
        Ok(match self.policy {
            Policy::AlwaysNmt => Decision::new(Backend::Nmt, &[]),
            Policy::AlwaysLlm => Decision::new(Backend::Llm, &[]),
            Policy::Pplt => {
                let lm = self.lm.as_ref().ok_or_else(|| missing("a language model"))?;
                let threshold = self.thresholds.pplt_threshold.ok_or_else(|| missing("a pplt threshold"))?;
                let ppl = lm.perplexity(&segment.text)?.value;
                let backend = if ppl > threshold { Backend::Llm } else { Backend::Nmt };
                Decision::new(backend, &[("ppl", ppl)])
            }
            Policy::Qet => {
                let threshold = self.thresholds.qet_threshold.ok_or_else(|| missing("a qet threshold"))?;
                let qe = ctx.qe_score.ok_or_else(|| missing("a QE score of the NMT output"))?;
                let backend = if qe.value < threshold { Backend::Llm } else { Backend::Nmt };
                Decision::new(backend, &[("qe_nmt", qe.value)])
            }
            Policy::Jdm => {
                let p = self.classifier_probability(&segment.text)?;
                let backend = if p > self.decision_boundary { Backend::Llm } else { Backend::Nmt };
                Decision::new(backend, &[("classifier_prob", p)])
            }
            Policy::Oracle => {
                let (n, l) = match (ctx.q_nmt, ctx.q_llm) {
                    (Some(n), Some(l)) => (n, l),
                    _ => return Err(missing("q_nmt and q_llm")),
                };
                if n.kind != l.kind {
                    return Err(Error::MixedScoreKinds);
                }
                let backend = if l.value > n.value { Backend::Llm } else { Backend::Nmt };
                Decision::new(backend, &[("q_nmt", n.value), ("q_llm", l.value)])
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ngram::{train_lm, NgramLanguageModel, TrainConfig};
    use crate::types::LanguagePair;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn pair() -> LanguagePair {
        "zh-en".parse().unwrap()
    }

    fn seg(id: usize, text: &str) -> Segment {
        Segment::new(format!("s{id}"), text, pair()).unwrap()
    }

    fn corpus(n: usize, seed: u64) -> Vec<String> {
        let words = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta", "iota", "kappa"];
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let len = r.random_range(2..10);
                (0..len)
                    .map(|_| {
                        // skewed toward the first words
                        let i = (r.random::<f64>().powi(3) * words.len() as f64) as usize;
                        words[i]
                    })
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect()
    }

    fn lm() -> Arc<NgramLanguageModel> {
        Arc::new(train_lm(&corpus(500, 1), &TrainConfig::default()).unwrap())
    }

    fn thresholds() -> PolicyThresholds {
        let mut t = PolicyThresholds::new(pair(), 0.25);
        t.qet_threshold = Some(70.0);
        t.pplt_threshold = Some(5.6);
        t
    }

    fn classifier() -> LinearDecider {
        LinearDecider {
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            weights: vec![1.5, 0.2, -0.1, 0.8, 0.0, 0.3, -0.2, 0.4],
            bias: -1.0,
            scaling: vec![
                FeatureScaling { mean: 1.5, std: 0.5 },
                FeatureScaling { mean: 5.0, std: 2.0 },
                FeatureScaling { mean: 4.0, std: 1.0 },
                FeatureScaling { mean: 0.1, std: 0.1 },
                FeatureScaling { mean: 0.0, std: 1.0 },
                FeatureScaling { mean: 0.0, std: 1.0 },
                FeatureScaling { mean: 0.9, std: 0.1 },
                FeatureScaling { mean: 3.0, std: 0.5 },
            ],
            training: None,
        }
    }

    fn jdm(boundary: f64) -> Decider {
        Decider::from_parts(Policy::Jdm, thresholds(), boundary, Some(lm()), Some(classifier())).unwrap()
    }

    fn score(v: f64) -> QualityScore {
        QualityScore::reference_based(v).unwrap()
    }

    #[test]
    fn pplt_is_strict_at_threshold() {
        let model = lm();
        let s = seg(0, "alpha beta gamma");
        let ppl = model.perplexity(&s.text).unwrap().value;
        let mut t = thresholds();
        t.pplt_threshold = Some(ppl);
        let d = Decider::from_parts(Policy::Pplt, t, 0.5, Some(model), None).unwrap();
        let out = d.decide(&s, &DecisionContext::default()).unwrap();
        assert_eq!(out.backend, Backend::Nmt);
        assert_eq!(out.evidence["ppl"], ppl);
        let lower = d.with_control(ppl - 1e-9).unwrap();
        assert_eq!(lower.decide(&s, &DecisionContext::default()).unwrap().backend, Backend::Llm);
    }

    #[test]
    fn qet_strict_and_requires_context() {
        let d = Decider::simple(Policy::Qet, thresholds()).unwrap();
        let s = seg(0, "x");
        assert!(matches!(
            d.decide(&s, &DecisionContext::default()),
            Err(Error::MissingContext { .. })
        ));
        let at = DecisionContext {
            qe_score: Some(QualityScore::reference_free(70.0).unwrap()),
            ..Default::default()
        };
        assert_eq!(d.decide(&s, &at).unwrap().backend, Backend::Nmt);
        let below = DecisionContext {
            qe_score: Some(QualityScore::reference_free(69.99).unwrap()),
            ..Default::default()
        };
        let out = d.decide(&s, &below).unwrap();
        assert_eq!(out.backend, Backend::Llm);
        assert_eq!(out.evidence["qe_nmt"], 69.99);
    }

    #[test]
    fn oracle_ties_go_to_nmt() {
        let d = Decider::simple(Policy::Oracle, thresholds()).unwrap();
        let s = seg(0, "x");
        let ctx = |n, l| DecisionContext {
            q_nmt: Some(score(n)),
            q_llm: Some(score(l)),
            ..Default::default()
        };
        assert_eq!(d.decide(&s, &ctx(80.0, 80.0)).unwrap().backend, Backend::Nmt);
        assert_eq!(d.decide(&s, &ctx(80.0, 80.5)).unwrap().backend, Backend::Llm);
        assert_eq!(d.decide(&s, &ctx(81.0, 80.5)).unwrap().backend, Backend::Nmt);
        assert!(d.decide(&s, &DecisionContext::default()).is_err());
    }

    #[test]
    fn always_policies_ignore_context() {
        let s = seg(0, "x");
        for (p, b) in [(Policy::AlwaysNmt, Backend::Nmt), (Policy::AlwaysLlm, Backend::Llm)] {
            let d = Decider::simple(p, thresholds()).unwrap();
            let out = d.decide(&s, &DecisionContext::default()).unwrap();
            assert_eq!(out.backend, b);
            assert!(out.evidence.is_empty());
        }
    }

    #[test]
    fn source_only_policies_ignore_scores() {
        let model = lm();
        let pplt = Decider::from_parts(Policy::Pplt, thresholds(), 0.5, Some(model), None).unwrap();
        let full = DecisionContext {
            qe_score: Some(QualityScore::reference_free(1.0).unwrap()),
            q_nmt: Some(score(10.0)),
            q_llm: Some(score(90.0)),
        };
        for (i, text) in corpus(50, 9).iter().enumerate() {
            let s = seg(i, text);
            for d in [&pplt, &jdm(0.5)] {
                assert_eq!(
                    d.decide(&s, &DecisionContext::default()).unwrap(),
                    d.decide(&s, &full).unwrap()
                );
            }
        }
    }

    #[test]
    fn jdm_matches_independent_formula() {
        let d = jdm(0.5);
        let model = lm();
        let clf = classifier();
        let texts = corpus(1000, 77);
        let mut routed = Vec::new();
        let mut expected = Vec::new();
        for (i, text) in texts.iter().enumerate() {
            let s = seg(i, text);
            if d.decide(&s, &DecisionContext::default()).unwrap().backend == Backend::Llm {
                routed.push(i);
            }
            let x = extract_features(text, model.as_ref()).unwrap().values;
            let mut z = clf.bias;
            for j in 0..x.len() {
                z += clf.weights[j] * (x[j] - clf.scaling[j].mean) / clf.scaling[j].std;
            }
            if 1.0 / (1.0 + (-z).exp()) > 0.5 {
                expected.push(i);
            }
        }
        assert_eq!(routed, expected);
        assert!(!routed.is_empty() && routed.len() < texts.len());
    }

    #[test]
    fn jdm_boundary_extremes() {
        let texts = corpus(100, 5);
        let count = |d: &Decider| {
            texts
                .iter()
                .enumerate()
                .filter(|(i, t)| {
                    d.decide(&seg(*i, t), &DecisionContext::default()).unwrap().backend == Backend::Llm
                })
                .count()
        };
        assert_eq!(count(&jdm(0.0)), 100);
        assert_eq!(count(&jdm(1.0)), 0);
    }

    #[test]
    fn load_rejects_missing_artifacts() {
        let spec = DeciderSpec::new(Policy::Pplt, thresholds());
        assert!(matches!(Decider::load(&spec), Err(Error::Config(_))));
        let spec = DeciderSpec::new(Policy::Jdm, thresholds());
        assert!(Decider::load(&spec).is_err());
        let mut t = thresholds();
        t.qet_threshold = None;
        assert!(Decider::simple(Policy::Qet, t).is_err());
    }

    #[test]
    fn load_from_files() {
        let dir = tempfile::tempdir().unwrap();
        crate::ngram::save_lm(&lm(), dir.path().join("lm.bin")).unwrap();
        classifier().save(dir.path().join("jdm.json")).unwrap();
        let mut spec = DeciderSpec::new(Policy::Jdm, thresholds());
        spec.lm_path = Some("lm.bin".into());
        spec.classifier_path = Some("jdm.json".into());
        spec.resolve_paths(dir.path());
        let d = Decider::load(&spec).unwrap();
        let s = seg(0, "alpha beta");
        assert_eq!(
            d.decide(&s, &DecisionContext::default()).unwrap(),
            jdm(0.5).decide(&s, &DecisionContext::default()).unwrap()
        );
    }

    #[test]
    fn policy_names_round_trip() {
        for p in Policy::ALL {
            assert_eq!(p.name().parse::<Policy>().unwrap(), p);
            assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{}\"", p.name()));
        }
        assert_eq!("always-llm".parse::<Policy>().unwrap(), Policy::AlwaysLlm);
    }

    fn routed(d: &Decider, texts: &[String]) -> std::collections::BTreeSet<usize> {
        texts
            .iter()
            .enumerate()
            .filter(|(i, t)| d.decide(&seg(*i, t), &DecisionContext::default()).unwrap().backend == Backend::Llm)
            .map(|(i, _)| i)
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn pplt_threshold_monotone(a in 1.0f64..20.0, b in 1.0f64..20.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let texts = corpus(200, 3);
            let base = Decider::from_parts(Policy::Pplt, thresholds(), 0.5, Some(lm()), None).unwrap();
            let low = routed(&base.with_control(lo).unwrap(), &texts);
            let high = routed(&base.with_control(hi).unwrap(), &texts);
            prop_assert!(high.is_subset(&low));
        }

        #[test]
        fn jdm_boundary_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let texts = corpus(200, 4);
            let low = routed(&jdm(lo), &texts);
            let high = routed(&jdm(hi), &texts);
            prop_assert!(high.is_subset(&low));
        }
    }
}
