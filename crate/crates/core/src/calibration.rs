//! Threshold calibration by rank statistics and JDM training-sample selection.
//!
//! Every policy threshold is fixed by a target LLM fraction `p`: with `N`
//! calibration scores and `k = max(1, floor(p * N))`, the threshold is the
//! k-th smallest score (QE, where low scores go to the LLM) or the k-th
//! largest (perplexity, where high scores go to the LLM). Ties in any
//! sort are broken by record id.

use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::dataset::{parse_dataset, records_to_jsonl, LoadOptions};
use crate::error::{Error, Result};
use crate::fsutil::{read_json, write_atomic, write_json};
use crate::ngram::LanguageModel;
use crate::types::{EvalRecord, LanguagePair};

/// Which tail of the score distribution goes to the LLM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileDirection {
    LowestFraction,
    HighestFraction,
}

fn check_fraction(fraction: f64) -> Result<()> {
    if fraction.is_finite() && fraction > 0.0 && fraction < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("fraction {fraction} must lie in (0, 1)")))
    }
}

/// `k = max(1, floor(fraction * n))`. A small epsilon absorbs binary
/// representation error so that e.g. 0.29 * 100 gives 29, not 28.
pub fn quantile_rank(n: usize, fraction: f64) -> usize {
    (((fraction * n as f64) + 1e-9).floor() as usize).clamp(1, n.max(1))
}

pub fn fit_quantile_threshold(
    scores: &[f64],
    fraction: f64,
    direction: QuantileDirection,
) -> Result<f64> {
    check_fraction(fraction)?;
    if scores.is_empty() {
        return Err(Error::Empty("no scores to calibrate on"));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("non-finite score {bad}")));
    }
    let k = quantile_rank(scores.len(), fraction);
    let mut sorted = scores.to_vec();
    let (_, kth, _) = match direction {
        QuantileDirection::LowestFraction => sorted.select_nth_unstable_by(k - 1, f64::total_cmp),
        QuantileDirection::HighestFraction => {
            sorted.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a))
        }
    };
    Ok(*kth)
}

/// Positive-sample condition: the NMT output is weak and the LLM output is
/// clearly better. Both comparisons are strict.
pub fn gain_label(q_nmt: f64, q_llm: f64, t1: f64, t2: f64) -> bool {
    q_nmt < t1 && (q_llm - q_nmt) > t2
}

/// QE threshold: the k-th lowest reference-free score of the NMT output.
pub fn calibrate_qet(records: &[EvalRecord], fraction: f64) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Empty("no calibration records"));
    }
    let missing: Vec<String> = records
        .iter()
        .filter(|r| r.qe_nmt.is_none())
        .map(|r| r.id().to_owned())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingField {
            field: "qe_nmt",
            ids: missing,
        });
    }
    let scores: Vec<f64> = records.iter().filter_map(|r| r.qe_nmt).map(|q| q.value).collect();
    fit_quantile_threshold(&scores, fraction, QuantileDirection::LowestFraction)
}

/// Perplexity threshold: the k-th highest perplexity over a monolingual corpus.
pub fn calibrate_pplt<S: AsRef<str>>(
    lm: &dyn LanguageModel,
    corpus: &[S],
    fraction: f64,
) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::Empty("calibration corpus"));
    }
    let ppl = corpus
        .iter()
        .enumerate()
        .map(|(index, s)| {
            lm.perplexity(s.as_ref())
                .map(|p| p.value)
                .map_err(|e| Error::AtSentence {
                    index,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<f64>>>()?;
    fit_quantile_threshold(&ppl, fraction, QuantileDirection::HighestFraction)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JdmSelection {
    pub t1_fraction: f64,
    pub n_pos: usize,
    pub neg_ratio: usize,
    pub seed: u64,
}

impl Default for JdmSelection {
    fn default() -> Self {
        Self {
            t1_fraction: 0.10,
            n_pos: 10_000,
            neg_ratio: 3,
            seed: 0,
        }
    }
}

/// Positives and negatives for training the JDM decider.
#[derive(Debug, Clone, PartialEq)]
pub struct JdmTrainingSet {
    /// Ordered by decreasing `q_llm - q_nmt`.
    pub positives: Vec<EvalRecord>,
    /// In dataset order.
    pub negatives: Vec<EvalRecord>,
    pub t1: f64,
    /// Gain of the last-ranked positive. Positives have gain >= t2; at
    /// inference the strict form `gain > t2` applies.
    pub t2: f64,
    pub seed: u64,
    /// Set when t2 <= 0: even the best-ranked slice shows no LLM gain.
    pub llm_never_better: bool,
}

fn paired_scores(r: &EvalRecord) -> (f64, f64) {
    match (r.q_nmt, r.q_llm) {
        (Some(a), Some(b)) => (a.value, b.value),
        _ => unreachable!("checked by select_jdm_samples"),
    }
}

pub fn select_jdm_samples(records: &[EvalRecord], sel: &JdmSelection) -> Result<JdmTrainingSet> {
    check_fraction(sel.t1_fraction)?;
    if sel.n_pos == 0 {
        return Err(Error::invalid("n_pos must be positive"));
    }
    let missing: Vec<String> = records
        .iter()
        .filter(|r| r.q_nmt.is_none() || r.q_llm.is_none())
        .map(|r| r.id().to_owned())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingField {
            field: "q_nmt/q_llm",
            ids: missing,
        });
    }
    let kind = records.first().and_then(|r| r.q_nmt).map(|q| q.kind);
    if records
        .iter()
        .any(|r| Some(r.q_nmt.unwrap().kind) != kind || Some(r.q_llm.unwrap().kind) != kind)
    {
        return Err(Error::MixedScoreKinds);
    }
    let n_neg = sel
        .n_pos
        .checked_mul(sel.neg_ratio)
        .ok_or_else(|| Error::invalid("n_pos * neg_ratio overflows"))?;
    if records.len() < sel.n_pos + n_neg {
        return Err(Error::invalid(format!(
            "{} records cannot supply {} positives and {} negatives",
            records.len(),
            sel.n_pos,
            n_neg
        )));
    }

    let q_nmt: Vec<f64> = records.iter().map(|r| paired_scores(r).0).collect();
    let t1 = fit_quantile_threshold(&q_nmt, sel.t1_fraction, QuantileDirection::LowestFraction)?;

    let gain = |i: usize| {
        let (n, l) = paired_scores(&records[i]);
        l - n
    };
    let mut slice: Vec<usize> = (0..records.len()).filter(|&i| q_nmt[i] < t1).collect();
    if slice.len() < sel.n_pos {
        return Err(Error::invalid(format!(
            "only {} records have q_nmt below t1 = {t1}; {} positives requested",
            slice.len(),
            sel.n_pos
        )));
    }
    slice.sort_by(|&a, &b| {
        gain(b)
            .total_cmp(&gain(a))
            .then_with(|| records[a].id().cmp(records[b].id()))
    });
    slice.truncate(sel.n_pos);
    let t2 = gain(slice[sel.n_pos - 1]);

    let mut is_positive = vec![false; records.len()];
    for &i in &slice {
        is_positive[i] = true;
    }
    let pool: Vec<usize> = (0..records.len()).filter(|&i| !is_positive[i]).collect();
    if pool.len() < n_neg {
        return Err(Error::invalid(format!(
            "only {} records remain for {n_neg} negatives",
            pool.len()
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(sel.seed);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, pool.len(), n_neg)
        .into_iter()
        .map(|j| pool[j])
        .collect();
    picked.sort_unstable();

    let llm_never_better = t2 <= 0.0;
    if llm_never_better {
        tracing::warn!(t2, "no positive LLM gain among selected samples");
    }
    Ok(JdmTrainingSet {
        positives: slice.iter().map(|&i| records[i].clone()).collect(),
        negatives: picked.iter().map(|&i| records[i].clone()).collect(),
        t1,
        t2,
        seed: sel.seed,
        llm_never_better,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JdmManifest {
    pub t1: f64,
    pub t2: f64,
    pub seed: u64,
    pub positives: usize,
    pub negatives: usize,
    pub llm_never_better: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<JdmSelection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_sha256: Option<String>,
}

pub const POSITIVES_FILE: &str = "positives.jsonl";
pub const NEGATIVES_FILE: &str = "negatives.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

impl JdmTrainingSet {
    /// Every positive lies below t1 with gain at least t2.
    pub fn satisfies_selection_convention(&self) -> bool {
        self.positives.iter().all(|r| {
            let (n, l) = paired_scores(r);
            n < self.t1 && (l - n) >= self.t2
        })
    }

    pub fn manifest(&self) -> JdmManifest {
        JdmManifest {
            t1: self.t1,
            t2: self.t2,
            seed: self.seed,
            positives: self.positives.len(),
            negatives: self.negatives.len(),
            llm_never_better: self.llm_never_better,
            selection: None,
            dataset_sha256: None,
        }
    }

    /// Writes `positives.jsonl`, `negatives.jsonl` and `manifest.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, manifest: &JdmManifest) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(dir.join(POSITIVES_FILE), records_to_jsonl(&self.positives)?.as_bytes())?;
        write_atomic(dir.join(NEGATIVES_FILE), records_to_jsonl(&self.negatives)?.as_bytes())?;
        write_json(dir.join(MANIFEST_FILE), manifest)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: JdmManifest = read_json(dir.join(MANIFEST_FILE))?;
        let read = |name: &str| -> Result<Vec<EvalRecord>> {
            let path = dir.join(name);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            Ok(parse_dataset(&text, &LoadOptions::strict())?.records)
        };
        let positives = read(POSITIVES_FILE)?;
        let negatives = read(NEGATIVES_FILE)?;
        if positives.len() != manifest.positives || negatives.len() != manifest.negatives {
            return Err(Error::invalid(format!(
                "{}: sample counts disagree with manifest",
                dir.display()
            )));
        }
        Ok(Self {
            positives,
            negatives,
            t1: manifest.t1,
            t2: manifest.t2,
            seed: manifest.seed,
            llm_never_better: manifest.llm_never_better,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Dataset name or path.
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_sha256: Option<String>,
    pub sample_count: usize,
    /// RFC 3339 timestamp.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrated_at: Option<String>,
}

/// Calibrated thresholds for one language pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyThresholds {
    pub pair: LanguagePair,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qet_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pplt_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jdm_t1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jdm_t2: Option<f64>,
    pub target_llm_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl PolicyThresholds {
    pub fn new(pair: LanguagePair, target_llm_fraction: f64) -> Self {
        Self {
            pair,
            qet_threshold: None,
            pplt_threshold: None,
            jdm_t1: None,
            jdm_t2: None,
            target_llm_fraction,
            provenance: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_fraction(self.target_llm_fraction)?;
        for (name, value) in [
            ("qet_threshold", self.qet_threshold),
            ("pplt_threshold", self.pplt_threshold),
            ("jdm_t1", self.jdm_t1),
            ("jdm_t2", self.jdm_t2),
        ] {
            if let Some(v) = value {
                if !v.is_finite() {
                    return Err(Error::invalid(format!("{name} = {v} is not finite")));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let t: Self = read_json(path)?;
        t.validate()?;
        Ok(t)
    }
}

const REFERENCE_THRESHOLDS: &str = include_str!("../defaults/thresholds.json");

/// Shipped reference thresholds for zh-en, en-zh, de-en and ja-en. They
/// are on the scale of the scorers and LM they were calibrated with and
/// should only be used with scorers of matching scale.
pub fn reference_thresholds() -> Vec<PolicyThresholds> {
    serde_json::from_str(REFERENCE_THRESHOLDS).expect("shipped thresholds parse")
}

pub fn reference_thresholds_for(pair: &LanguagePair) -> Option<PolicyThresholds> {
    reference_thresholds().into_iter().find(|t| &t.pair == pair)
}
