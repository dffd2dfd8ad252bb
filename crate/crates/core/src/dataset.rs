//! JSONL ingestion and serialization of [`EvalRecord`]s.
//!
//! One JSON object per line:
//!
//! ```text
//! {"id":"1","src":"你好","pair":"zh-en","ref":"Hello","nmt":"Hello","llm":"Hi",
//!  "q_nmt":81.2,"q_llm":83.0,"qe_nmt":74.1,"annotations":{"domain":"News"}}
//! ```
//!
//! Scores may be plain numbers (`q_nmt`/`q_llm` default to reference-based,
//! `qe_nmt` to reference-free) or `{"value": .., "kind": ..}` objects.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{EvalRecord, LanguagePair, QualityScore, ScoreKind, Segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetFormat {
    #[default]
    Jsonl,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub format: DatasetFormat,
    /// Fail on the first malformed line instead of skipping it.
    pub strict: bool,
    /// Pair used for lines that omit `pair`.
    pub default_pair: Option<LanguagePair>,
}

impl LoadOptions {
    pub fn strict() -> Self {
        Self {
            strict: true,
            ..Self::default()
        }
    }
}

/// A line that could not be turned into a record.
#[derive(Debug, Clone, PartialEq)]
pub struct LineIssue {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<EvalRecord>,
    /// Malformed lines skipped in lenient mode.
    pub skipped: Vec<LineIssue>,
    /// Hex SHA-256 of the raw file bytes.
    pub sha256: String,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ScoreField {
    Plain(f64),
    Full(QualityScore),
}

impl ScoreField {
    fn into_score(self, default_kind: ScoreKind) -> Result<QualityScore> {
        match self {
            ScoreField::Plain(v) => QualityScore::new(v, default_kind),
            ScoreField::Full(q) => QualityScore::new(q.value, q.kind),
        }
    }

    fn from_score(score: QualityScore, default_kind: ScoreKind) -> Self {
        if score.kind == default_kind {
            ScoreField::Plain(score.value)
        } else {
            ScoreField::Full(score)
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    #[serde(default)]
    src: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pair: Option<String>,
    #[serde(rename = "ref", default, skip_serializing_if = "Option::is_none")]
    reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nmt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    llm: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q_nmt: Option<ScoreField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q_llm: Option<ScoreField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    qe_nmt: Option<ScoreField>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    annotations: BTreeMap<String, String>,
}

fn parse_line(text: &str, line_no: usize, opts: &LoadOptions) -> Result<EvalRecord> {
    let raw: RecordLine = serde_json::from_str(text).map_err(|e| malformed(line_no, e))?;
    let src = raw
        .src
        .ok_or_else(|| malformed(line_no, "missing required key \"src\""))?;
    let pair = match (raw.pair, &opts.default_pair) {
        (Some(p), _) => p.parse().map_err(|e| malformed(line_no, e))?,
        (None, Some(p)) => p.clone(),
        (None, None) => return Err(malformed(line_no, "missing required key \"pair\"")),
    };
    let id = raw.id.unwrap_or_else(|| line_no.to_string());
    let mut segment = Segment::new(id, src, pair).map_err(|e| malformed(line_no, e))?;
    segment.annotations = raw.annotations;

    let score = |field: Option<ScoreField>, kind| {
        field
            .map(|f| f.into_score(kind))
            .transpose()
            .map_err(|e| malformed(line_no, e))
    };
    let record = EvalRecord {
        segment,
        reference: raw.reference,
        nmt_hyp: raw.nmt,
        llm_hyp: raw.llm,
        q_nmt: score(raw.q_nmt, ScoreKind::ReferenceBased)?,
        q_llm: score(raw.q_llm, ScoreKind::ReferenceBased)?,
        qe_nmt: score(raw.qe_nmt, ScoreKind::ReferenceFree)?,
    };
    record.validate().map_err(|e| malformed(line_no, e))?;
    Ok(record)
}

fn malformed(line: usize, message: impl ToString) -> Error {
    Error::Malformed {
        line,
        message: message.to_string(),
    }
}

/// Parses JSONL text. Blank lines are ignored; line numbers are 1-based.
pub fn parse_dataset(text: &str, opts: &LoadOptions) -> Result<Dataset> {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line, line_no, opts) {
            Ok(record) => {
                if let Some(_first) = seen.insert(record.id().to_owned(), line_no) {
                    return Err(Error::DuplicateId {
                        id: record.id().to_owned(),
                        line: line_no,
                    });
                }
                records.push(record);
            }
            Err(e) if opts.strict => return Err(e),
            Err(e) => {
                let message = match e {
                    Error::Malformed { message, .. } => message,
                    other => other.to_string(),
                };
                tracing::warn!(line = line_no, %message, "skipping malformed record");
                skipped.push(LineIssue {
                    line: line_no,
                    message,
                });
            }
        }
    }
    Ok(Dataset {
        records,
        skipped,
        sha256: hex::encode(Sha256::digest(text.as_bytes())),
    })
}

/// Loads a dataset, returning records in file order.
pub fn load_dataset(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match opts.format {
        DatasetFormat::Jsonl => parse_dataset(&text, opts),
    }
}

/// Serializes one record as a single JSON line (no trailing newline).
pub fn record_to_json(record: &EvalRecord) -> Result<String> {
    let line = RecordLine {
        id: Some(record.segment.id.clone()),
        src: Some(record.segment.text.clone()),
        pair: Some(record.segment.pair.to_string()),
        reference: record.reference.clone(),
        nmt: record.nmt_hyp.clone(),
        llm: record.llm_hyp.clone(),
        q_nmt: record
            .q_nmt
            .map(|q| ScoreField::from_score(q, ScoreKind::ReferenceBased)),
        q_llm: record
            .q_llm
            .map(|q| ScoreField::from_score(q, ScoreKind::ReferenceBased)),
        qe_nmt: record
            .qe_nmt
            .map(|q| ScoreField::from_score(q, ScoreKind::ReferenceFree)),
        annotations: record.segment.annotations.clone(),
    };
    Ok(serde_json::to_string(&line)?)
}

pub fn records_to_jsonl<'a>(records: impl IntoIterator<Item = &'a EvalRecord>) -> Result<String> {
    let mut out = String::new();
    for record in records {
        out.push_str(&record_to_json(record)?);
        out.push('\n');
    }
    Ok(out)
}

/// Reads a one-sentence-per-line corpus, dropping blank lines.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(line);
        }
    }
    Ok(out)
}
