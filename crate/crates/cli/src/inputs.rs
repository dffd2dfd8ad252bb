//! Loading and resolving inputs shared by several subcommands.

use std::path::Path;

use anyhow::{Context, Result};
use chrono::{DateTime, SecondsFormat, Utc};

use mtcascade::calibration::PolicyThresholds;
use mtcascade::dataset::{load_dataset, Dataset, LoadOptions};
use mtcascade::decider::{DeciderSpec, Policy};
use mtcascade::fsutil::read_json;
use mtcascade::scoring::{ScoreItem, Scorer, ScorerSpec};
use mtcascade::{Backend, EvalRecord, LanguagePair, ScoreKind};

use crate::{usage, DatasetArgs, DeciderArgs, ScorerArg, ScorerArgs};

pub fn load_records(args: &DatasetArgs) -> Result<Dataset> {
    load_records_from(&args.records, args.lenient)
}

pub fn load_records_from(path: &Path, lenient: bool) -> Result<Dataset> {
    let opts = LoadOptions {
        strict: !lenient,
        ..LoadOptions::default()
    };
    let data = load_dataset(path, &opts).with_context(|| format!("loading {}", path.display()))?;
    if data.records.is_empty() {
        usage!("{} contains no records", path.display());
    }
    if !data.skipped.is_empty() {
        tracing::warn!(skipped = data.skipped.len(), "malformed lines skipped");
    }
    Ok(data)
}

/// The single language pair shared by all records.
pub fn common_pair(records: &[EvalRecord]) -> Result<LanguagePair> {
    let first = &records[0].segment.pair;
    if let Some(other) = records.iter().find(|r| &r.segment.pair != first) {
        usage!(
            "records mix language pairs ({first} and {} at {})",
            other.segment.pair,
            other.id()
        );
    }
    Ok(first.clone())
}

pub fn scorer_spec(args: &ScorerArgs, mode: ScoreKind) -> Result<ScorerSpec> {
    let remote = match (args.scorer, &args.scorer_url) {
        (Some(ScorerArg::Builtin), _) => false,
        (Some(ScorerArg::Remote), None) => usage!("--scorer remote needs --scorer-url or MTCASCADE_SCORER_URL"),
        (Some(ScorerArg::Remote), Some(_)) | (None, Some(_)) => true,
        (None, None) => false,
    };
    let mut spec = if remote {
        ScorerSpec::remote(mode, args.scorer_url.clone().unwrap_or_default())
    } else {
        ScorerSpec::builtin(mode)
    };
    spec.timeout_ms = args.scorer_timeout_ms;
    spec.max_retries = args.scorer_retries;
    spec.validate()?;
    Ok(spec)
}

/// Scores whatever reference-based qualities are missing.
pub fn fill_quality(records: &mut [EvalRecord], spec: &ScorerSpec) -> Result<()> {
    let scorer = Scorer::new(spec.with_mode(ScoreKind::ReferenceBased))?;
    for backend in [Backend::Nmt, Backend::Llm] {
        let todo: Vec<usize> = (0..records.len())
            .filter(|&i| records[i].quality(backend).is_none())
            .collect();
        if todo.is_empty() {
            continue;
        }
        let mut items = Vec::with_capacity(todo.len());
        for &i in &todo {
            let r = &records[i];
            match (r.hypothesis(backend), r.reference.as_deref()) {
                (Some(h), Some(reference)) => items.push(ScoreItem::new(&r.segment.text, h, Some(reference))),
                _ => usage!("record {} has no {backend} score and no hypothesis/reference to compute it", r.id()),
            }
        }
        let scores = scorer.score_batch(&items)?;
        for (i, s) in todo.into_iter().zip(scores) {
            match backend {
                Backend::Nmt => records[i].q_nmt = Some(s),
                Backend::Llm => records[i].q_llm = Some(s),
            }
        }
    }
    Ok(())
}

/// Scores missing reference-free estimates of the NMT output.
pub fn fill_qe(records: &mut [EvalRecord], spec: &ScorerSpec) -> Result<()> {
    let scorer = Scorer::new(spec.with_mode(ScoreKind::ReferenceFree))?;
    let todo: Vec<usize> = (0..records.len()).filter(|&i| records[i].qe_nmt.is_none()).collect();
    if todo.is_empty() {
        return Ok(());
    }
    let mut items = Vec::with_capacity(todo.len());
    for &i in &todo {
        let r = &records[i];
        match r.nmt_hyp.as_deref() {
            Some(h) => items.push(ScoreItem::new(&r.segment.text, h, None).with_pair(&r.segment.pair)),
            None => usage!("record {} has neither qe_nmt nor an NMT hypothesis", r.id()),
        }
    }
    let scores = scorer.score_batch(&items)?;
    for (i, s) in todo.into_iter().zip(scores) {
        records[i].qe_nmt = Some(s);
    }
    Ok(())
}

/// Builds a decider spec from `--config` and the individual flags. A sweep
/// supplies `placeholder` for a threshold it is about to override anyway.
pub fn decider_spec(args: &DeciderArgs, pair: &LanguagePair, placeholder: Option<f64>) -> Result<DeciderSpec> {
    let mut spec = match &args.config {
        Some(path) => {
            let mut spec: DeciderSpec = read_json(path).with_context(|| format!("reading {}", path.display()))?;
            spec.resolve_paths(path.parent().unwrap_or(Path::new(".")));
            if let Some(p) = args.policy {
                spec.policy = p;
            }
            spec
        }
        None => {
            let Some(policy) = args.policy else {
                usage!("--policy or --config is required");
            };
            DeciderSpec::new(policy, PolicyThresholds::new(pair.clone(), 0.25))
        }
    };
    if let Some(path) = &args.thresholds {
        spec.thresholds = PolicyThresholds::load(path).with_context(|| format!("reading {}", path.display()))?;
    }
    if let Some(p) = &args.lm {
        spec.lm_path = Some(p.clone());
    }
    if let Some(p) = &args.classifier {
        spec.classifier_path = Some(p.clone());
    }
    if let Some(b) = args.decision_boundary {
        spec.decision_boundary = b;
    }
    if let Some(v) = placeholder {
        let t = &mut spec.thresholds;
        match spec.policy {
            Policy::Qet => t.qet_threshold = t.qet_threshold.or(Some(v)),
            Policy::Pplt => t.pplt_threshold = t.pplt_threshold.or(Some(v)),
            _ => {}
        }
    }
    if &spec.thresholds.pair != pair && spec.policy != Policy::Oracle {
        usage!("thresholds are for {} but the records are {pair}", spec.thresholds.pair);
    }
    spec.validate()?;
    Ok(spec)
}

/// Calibration timestamp: `SOURCE_DATE_EPOCH` when set, else the input's
/// modification time. Reruns on unchanged inputs therefore agree.
pub fn calibrated_at(input: &Path) -> Result<String> {
    let time: DateTime<Utc> = match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => {
            let secs: i64 = v.trim().parse().with_context(|| format!("SOURCE_DATE_EPOCH={v:?}"))?;
            DateTime::from_timestamp(secs, 0).context("SOURCE_DATE_EPOCH out of range")?
        }
        Err(_) => std::fs::metadata(input)
            .and_then(|m| m.modified())
            .with_context(|| format!("reading mtime of {}", input.display()))?
            .into(),
    };
    Ok(time.to_rfc3339_opts(SecondsFormat::Secs, true))
}
