//! Offline replay of routing policies over scored datasets.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decider::{Decider, DecisionContext, DeciderSpec, Policy};
use crate::error::{Error, Result};
use crate::scoring::{ScoreItem, Scorer, ScorerSpec};
use crate::types::{Backend, EvalRecord, QualityScore, ScoreKind, Segment};

/// Label for records lacking the grouping annotation.
pub const UNGROUPED: &str = "(none)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n: usize,
    pub mean_quality: f64,
    pub llm_p: f64,
    pub nmt_mean: f64,
    pub llm_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub policy: String,
    pub n: usize,
    pub score_kind: ScoreKind,
    pub mean_quality: f64,
    pub llm_p: f64,
    /// Mean quality had every record gone to NMT (or LLM).
    pub nmt_mean: f64,
    pub llm_mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_by: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub groups: BTreeMap<String, GroupStats>,
    /// This policy's mean quality minus each named policy's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff_vs: Option<BTreeMap<String, f64>>,
    /// Hash of the sorted record ids.
    pub dataset_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordDecision {
    pub id: String,
    pub backend: Backend,
    pub evidence: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub report: ReplayReport,
    /// In dataset order.
    pub decisions: Vec<RecordDecision>,
}

#[derive(Debug, Clone)]
struct Row {
    segment: Segment,
    group: Option<String>,
    q_nmt: f64,
    q_llm: f64,
    qe: Option<QualityScore>,
}

/// Records with both candidate qualities resolved, ready for any number of
/// replays.
#[derive(Debug, Clone)]
pub struct Prepared {
    rows: Vec<Row>,
    kind: ScoreKind,
    group_by: Option<String>,
    fingerprint: String,
    /// Row indices sorted by id; every reduction runs in this order.
    order: Vec<usize>,
}

fn fingerprint<'a>(ids: impl Iterator<Item = &'a str>) -> String {
    let mut h = Sha256::new();
    for id in ids {
        h.update(id.as_bytes());
        h.update([b'\n']);
    }
    hex::encode(&h.finalize()[..12])
}

impl Prepared {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn score_kind(&self) -> ScoreKind {
        self.kind
    }
}

/// Resolves `q_nmt`, `q_llm` (and `qe_nmt` when `need_qe`) for every record.
/// Pre-scored values of the scorer's kind are used as is; the rest are scored.
pub fn prepare(
    records: &[EvalRecord],
    scorer: &Scorer,
    group_by: Option<&str>,
    need_qe: bool,
) -> Result<Prepared> {
    if records.is_empty() {
        return Err(Error::Empty("no records to replay"));
    }
    let kind = scorer.mode();
    let mut missing: Vec<String> = Vec::new();
    let mut to_score: Vec<(usize, Backend)> = Vec::new();
    let mut to_qe: Vec<usize> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let mut problems = Vec::new();
        for b in [Backend::Nmt, Backend::Llm] {
            match r.quality(b) {
                Some(q) if q.kind == kind => {}
                _ => {
                    let ok = r.hypothesis(b).is_some()
                        && (kind == ScoreKind::ReferenceFree || r.reference.is_some());
                    if ok {
                        to_score.push((i, b));
                    } else {
                        problems.push(match b {
                            Backend::Nmt => "q_nmt",
                            Backend::Llm => "q_llm",
                        });
                    }
                }
            }
        }
        if need_qe && r.qe_nmt.is_none() {
            if r.nmt_hyp.is_some() {
                to_qe.push(i);
            } else {
                problems.push("qe_nmt");
            }
        }
        if !problems.is_empty() {
            missing.push(format!("{} ({})", r.id(), problems.join(", ")));
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingField {
            field: "scores or hypotheses",
            ids: missing,
        });
    }

    let items: Vec<ScoreItem> = to_score
        .iter()
        .map(|&(i, b)| {
            let r = &records[i];
            let reference = match kind {
                ScoreKind::ReferenceBased => r.reference.as_deref(),
                ScoreKind::ReferenceFree => None,
            };
            ScoreItem::new(&r.segment.text, r.hypothesis(b).unwrap_or_default(), reference)
                .with_pair(&r.segment.pair)
        })
        .collect();
    let scored = if items.is_empty() {
        Vec::new()
    } else {
        scorer.score_batch(&items)?
    };
    let mut filled: BTreeMap<(usize, Backend), f64> = BTreeMap::new();
    for (&key, q) in to_score.iter().zip(&scored) {
        filled.insert(key, q.value);
    }

    let mut qe_filled: BTreeMap<usize, QualityScore> = BTreeMap::new();
    if !to_qe.is_empty() {
        let qe_scorer = match scorer.spec().backend {
            crate::scoring::ScorerBackend::Builtin => Scorer::builtin(ScoreKind::ReferenceFree),
            _ => Scorer::new(scorer.spec().with_mode(ScoreKind::ReferenceFree))?,
        };
        let qe_items: Vec<ScoreItem> = to_qe
            .iter()
            .map(|&i| {
                let r = &records[i];
                ScoreItem::new(&r.segment.text, r.nmt_hyp.as_deref().unwrap_or_default(), None)
                    .with_pair(&r.segment.pair)
            })
            .collect();
        for (&i, q) in to_qe.iter().zip(qe_scorer.score_batch(&qe_items)?) {
            qe_filled.insert(i, q);
        }
    }

    let rows: Vec<Row> = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let q = |b: Backend| match r.quality(b) {
                Some(q) if q.kind == kind => q.value,
                _ => filled[&(i, b)],
            };
            Row {
                segment: r.segment.clone(),
                group: group_by.map(|k| r.segment.annotation(k).unwrap_or(UNGROUPED).to_owned()),
                q_nmt: q(Backend::Nmt),
                q_llm: q(Backend::Llm),
                qe: r.qe_nmt.or_else(|| qe_filled.get(&i).copied()),
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[a].segment.id.cmp(&rows[b].segment.id));
    if let Some(w) = order.windows(2).find(|w| rows[w[0]].segment.id == rows[w[1]].segment.id) {
        return Err(Error::invalid(format!("duplicate record id {:?}", rows[w[0]].segment.id)));
    }
    let fingerprint = fingerprint(order.iter().map(|&i| rows[i].segment.id.as_str()));
    Ok(Prepared {
        rows,
        kind,
        group_by: group_by.map(str::to_owned),
        fingerprint,
        order,
    })
}

#[derive(Default)]
struct Acc {
    n: usize,
    llm: usize,
    quality: f64,
    nmt: f64,
    llm_q: f64,
}

impl Acc {
    fn add(&mut self, row: &Row, backend: Backend) {
        self.n += 1;
        self.nmt += row.q_nmt;
        self.llm_q += row.q_llm;
        match backend {
            Backend::Nmt => self.quality += row.q_nmt,
            Backend::Llm => {
                self.llm += 1;
                self.quality += row.q_llm;
            }
        }
    }

    fn stats(&self) -> GroupStats {
        let n = self.n as f64;
        GroupStats {
            n: self.n,
            mean_quality: self.quality / n,
            llm_p: self.llm as f64 / n,
            nmt_mean: self.nmt / n,
            llm_mean: self.llm_q / n,
        }
    }
}

/// Routes every prepared record with `decider` and aggregates.
pub fn replay_prepared(prep: &Prepared, decider: &Decider) -> Result<ReplayOutcome> {
    let decisions: Vec<RecordDecision> = prep
        .rows
        .iter()
        .map(|row| {
            let ctx = DecisionContext {
                qe_score: row.qe,
                q_nmt: Some(QualityScore::new(row.q_nmt, prep.kind)?),
                q_llm: Some(QualityScore::new(row.q_llm, prep.kind)?),
            };
            let d = decider.decide(&row.segment, &ctx)?;
            Ok(RecordDecision {
                id: row.segment.id.clone(),
                backend: d.backend,
                evidence: d.evidence,
            })
        })
        .collect::<Result<_>>()?;

    let mut all = Acc::default();
    let mut groups: BTreeMap<String, Acc> = BTreeMap::new();
    for &i in &prep.order {
        let row = &prep.rows[i];
        all.add(row, decisions[i].backend);
        if let Some(g) = &row.group {
            groups.entry(g.clone()).or_default().add(row, decisions[i].backend);
        }
    }
    let overall = all.stats();
    let report = ReplayReport {
        policy: decider.policy().name().to_owned(),
        n: overall.n,
        score_kind: prep.kind,
        mean_quality: overall.mean_quality,
        llm_p: overall.llm_p,
        nmt_mean: overall.nmt_mean,
        llm_mean: overall.llm_mean,
        group_by: prep.group_by.clone(),
        groups: groups.iter().map(|(k, a)| (k.clone(), a.stats())).collect(),
        diff_vs: Some(BTreeMap::from([
            (Policy::AlwaysNmt.name().to_owned(), overall.mean_quality - overall.nmt_mean),
            (Policy::AlwaysLlm.name().to_owned(), overall.mean_quality - overall.llm_mean),
        ])),
        dataset_fingerprint: prep.fingerprint.clone(),
    };
    Ok(ReplayOutcome { report, decisions })
}

/// Loads the decider and scorer named by the specs and replays `records`.
pub fn replay(
    records: &[EvalRecord],
    spec: &DeciderSpec,
    scorer: &ScorerSpec,
    group_by: Option<&str>,
) -> Result<ReplayOutcome> {
    let decider = Decider::load(spec)?;
    let scorer = Scorer::new(scorer.clone())?;
    replay_with(records, &decider, &scorer, group_by)
}

pub fn replay_with(
    records: &[EvalRecord],
    decider: &Decider,
    scorer: &Scorer,
    group_by: Option<&str>,
) -> Result<ReplayOutcome> {
    let prep = prepare(records, scorer, group_by, decider.policy() == Policy::Qet)?;
    replay_prepared(&prep, decider)
}

/// Sets each report's `diff_vs` entry for every other report's policy.
pub fn attach_diffs(reports: &mut [ReplayReport]) {
    let means: Vec<(String, f64)> = reports
        .iter()
        .map(|r| (r.policy.clone(), r.mean_quality))
        .collect();
    for r in reports.iter_mut() {
        let diffs = r.diff_vs.get_or_insert_with(BTreeMap::new);
        for (name, mean) in &means {
            if *name != r.policy {
                diffs.insert(name.clone(), r.mean_quality - mean);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub control: f64,
    pub llm_p: f64,
    pub mean_quality: f64,
}

/// One replay per control value (threshold for qet/pplt, boundary for jdm).
pub fn pareto_sweep(prep: &Prepared, decider: &Decider, sweep: &[f64]) -> Result<Vec<SweepPoint>> {
    if !matches!(decider.policy(), Policy::Qet | Policy::Pplt | Policy::Jdm) {
        return Err(Error::invalid(format!("policy {} has no control value", decider.policy())));
    }
    if sweep.len() < 2 {
        return Err(Error::invalid("a sweep needs at least two points"));
    }
    sweep
        .iter()
        .map(|&v| {
            let out = replay_prepared(prep, &decider.with_control(v)?)?;
            Ok(SweepPoint {
                control: v,
                llm_p: out.report.llm_p,
                mean_quality: out.report.mean_quality,
            })
        })
        .collect()
}

pub fn sweep_to_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("control,llm_p,mean_quality\n");
    for p in points {
        let _ = writeln!(out, "{},{:.6},{:.6}", p.control, p.llm_p, p.mean_quality);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub text: String,
    pub csv: String,
}

const ORACLE: &str = "oracle";

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

/// Aligned text table plus CSV, one row per policy, oracle last. `Avg` is
/// the unweighted mean of the per-group values.
pub fn compare_report(reports: &[ReplayReport]) -> Result<Comparison> {
    let first = reports.first().ok_or(Error::Empty("no reports to compare"))?;
    for r in reports {
        if r.n != first.n || r.dataset_fingerprint != first.dataset_fingerprint {
            return Err(Error::invalid(format!(
                "report {} covers a different dataset than {}",
                r.policy, first.policy
            )));
        }
        if r.score_kind != first.score_kind {
            return Err(Error::MixedScoreKinds);
        }
    }
    let mut ordered: Vec<&ReplayReport> = reports.iter().filter(|r| r.policy != ORACLE).collect();
    ordered.extend(reports.iter().filter(|r| r.policy == ORACLE));

    let group_names: Vec<String> = {
        let mut g: Vec<String> = reports.iter().flat_map(|r| r.groups.keys().cloned()).collect();
        g.sort();
        g.dedup();
        g
    };
    let cells = |r: &ReplayReport| -> Vec<(String, f64, f64, usize)> {
        if group_names.is_empty() {
            vec![("all".to_owned(), r.mean_quality, r.llm_p, r.n)]
        } else {
            group_names
                .iter()
                .map(|g| match r.groups.get(g) {
                    Some(s) => (g.clone(), s.mean_quality, s.llm_p, s.n),
                    None => (g.clone(), f64::NAN, f64::NAN, 0),
                })
                .collect()
        }
    };
    let avg = |cs: &[(String, f64, f64, usize)]| {
        let k = cs.len() as f64;
        (
            cs.iter().map(|c| c.1).sum::<f64>() / k,
            cs.iter().map(|c| c.2).sum::<f64>() / k,
        )
    };

    let mut header = vec!["policy".to_owned()];
    let labels: Vec<String> = if group_names.is_empty() {
        vec!["all".to_owned()]
    } else {
        group_names.clone()
    };
    for g in &labels {
        header.push(format!("{g} Q"));
        header.push(format!("{g} LLM_p"));
    }
    header.push("Avg Q".into());
    header.push("Avg LLM_p".into());

    let mut rows: Vec<Vec<String>> = vec![header];
    let mut csv = String::from("policy,group,n,mean_quality,llm_p\n");
    for r in &ordered {
        let cs = cells(r);
        let (aq, ap) = avg(&cs);
        let name = if r.policy == ORACLE {
            format!("*{}*", r.policy)
        } else {
            r.policy.clone()
        };
        let mut row = vec![name];
        for c in &cs {
            row.push(format!("{:.2}", c.1));
            row.push(pct(c.2));
            if !group_names.is_empty() {
                let _ = writeln!(csv, "{},{},{},{:.6},{:.6}", r.policy, c.0, c.3, c.1, c.2);
            }
        }
        row.push(format!("{aq:.2}"));
        row.push(pct(ap));
        rows.push(row);
        if !group_names.is_empty() {
            let _ = writeln!(csv, "{},avg,{},{:.6},{:.6}", r.policy, r.n, aq, ap);
        }
        let _ = writeln!(csv, "{},all,{},{:.6},{:.6}", r.policy, r.n, r.mean_quality, r.llm_p);
    }

    let widths: Vec<usize> = (0..rows[0].len())
        .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut text = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                if j == 0 {
                    format!("{cell:<w$}", w = widths[j])
                } else {
                    format!("{cell:>w$}", w = widths[j])
                }
            })
            .collect();
        let _ = writeln!(text, "{}", line.join("  "));
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            let _ = writeln!(text, "{}", "-".repeat(total));
        }
    }
    let _ = writeln!(text);
    let _ = writeln!(
        text,
        "n = {}; scores are {}; Avg is the unweighted mean over groups.",
        first.n, first.score_kind
    );
    if ordered.iter().any(|r| r.policy == ORACLE) {
        let _ = writeln!(
            text,
            "*oracle* is an offline upper bound; ties (q_llm = q_nmt) count as NMT."
        );
    }
    Ok(Comparison { text, csv })
}

/// Per-group NMT mean, LLM mean and their difference, groups ordered by
/// size (largest first).
pub fn difficulty_table(report: &ReplayReport) -> Result<String> {
    if report.groups.is_empty() {
        return Err(Error::invalid("report has no groups; replay with a group_by key"));
    }
    let mut groups: Vec<(&String, &GroupStats)> = report.groups.iter().collect();
    groups.sort_by(|a, b| b.1.n.cmp(&a.1.n).then_with(|| a.0.cmp(b.0)));
    let header: Vec<String> = groups
        .iter()
        .map(|(g, s)| format!("{g} ({})", pct(s.n as f64 / report.n as f64)))
        .collect();
    let mut rows = vec![(String::new(), header)];
    for (label, f) in [
        ("NMT", (|s: &GroupStats| s.nmt_mean) as fn(&GroupStats) -> f64),
        ("LLM", |s: &GroupStats| s.llm_mean),
        ("Diff", |s: &GroupStats| s.llm_mean - s.nmt_mean),
    ] {
        rows.push((
            label.to_owned(),
            groups.iter().map(|(_, s)| format!("{:.2}", f(s))).collect(),
        ));
    }
    let label_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let col_w: Vec<usize> = (0..groups.len())
        .map(|j| rows.iter().map(|r| r.1[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (label, cells) in &rows {
        let mut line = format!("{label:<label_w$}");
        for (c, w) in cells.iter().zip(&col_w) {
            let _ = write!(line, "  {c:>w$}");
        }
        let _ = writeln!(out, "{}", line.trim_end());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::PolicyThresholds;
    use crate::types::LanguagePair;
    use rand::{Rng, SeedableRng};

    fn pair() -> LanguagePair {
        "de-en".parse().unwrap()
    }

    fn rec(id: usize, q_nmt: f64, q_llm: f64, group: &str) -> EvalRecord {
        let seg = Segment::new(format!("r{id:04}"), "ein satz", pair())
            .unwrap()
            .with_annotation("difficulty", group);
        let mut r = EvalRecord::new(seg);
        r.reference = Some("a sentence".into());
        r.nmt_hyp = Some("a sentence".into());
        r.llm_hyp = Some("one sentence".into());
        r.q_nmt = Some(QualityScore::reference_based(q_nmt).unwrap());
        r.q_llm = Some(QualityScore::reference_based(q_llm).unwrap());
        r
    }

    fn decider(p: Policy) -> Decider {
        let mut t = PolicyThresholds::new(pair(), 0.25);
        t.qet_threshold = Some(50.0);
        Decider::simple(p, t).unwrap()
    }

    fn rb() -> Scorer {
        Scorer::builtin(ScoreKind::ReferenceBased)
    }

    #[test]
    fn oracle_counts_llm_wins() {
        let records: Vec<EvalRecord> = (0..100)
            .map(|i| if i < 40 { rec(i, 60.0, 70.0, "x") } else { rec(i, 60.0, 60.0 - (i % 2) as f64, "x") })
            .collect();
        let out = replay_with(&records, &decider(Policy::Oracle), &rb(), None).unwrap();
        assert_eq!(out.report.llm_p, 0.40);
    }

    #[test]
    fn always_llm_matches_q_llm_mean() {
        let records: Vec<EvalRecord> = (0..10).map(|i| rec(i, 50.0, 60.0 + i as f64, "x")).collect();
        let out = replay_with(&records, &decider(Policy::AlwaysLlm), &rb(), None).unwrap();
        assert_eq!(out.report.llm_p, 1.0);
        assert_eq!(out.report.mean_quality, 64.5);
        let out = replay_with(&records, &decider(Policy::AlwaysNmt), &rb(), None).unwrap();
        assert_eq!(out.report.llm_p, 0.0);
        assert_eq!(out.report.mean_quality, 50.0);
    }

    #[test]
    fn missing_fields_list_ids() {
        let mut a = rec(1, 50.0, 60.0, "x");
        a.q_llm = None;
        a.llm_hyp = None;
        let b = rec(2, 50.0, 60.0, "x");
        let err = replay_with(&[a, b], &decider(Policy::Oracle), &rb(), None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("r0001"), "{msg}");
        assert!(!msg.contains("r0002"), "{msg}");
    }

    #[test]
    fn scorer_fills_missing_scores() {
        let mut a = rec(1, 50.0, 60.0, "x");
        a.q_nmt = None;
        let out = replay_with(&[a], &decider(Policy::AlwaysNmt), &rb(), None).unwrap();
        assert_eq!(out.report.mean_quality, 100.0);
    }

    #[test]
    fn qet_routes_exactly_below_threshold() {
        let records: Vec<EvalRecord> = (0..50)
            .map(|i| {
                let mut r = rec(i, 50.0, 55.0, "x");
                r.qe_nmt = Some(QualityScore::reference_free(i as f64 * 2.0).unwrap());
                r
            })
            .collect();
        let out = replay_with(&records, &decider(Policy::Qet), &rb(), None).unwrap();
        for (r, d) in records.iter().zip(&out.decisions) {
            let below = r.qe_nmt.unwrap().value < 50.0;
            assert_eq!(d.backend == Backend::Llm, below);
        }
        assert_eq!(out.report.llm_p, 0.5);
    }

    #[test]
    fn permutation_invariant_and_grouped() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut records: Vec<EvalRecord> = (0..300)
            .map(|i| {
                let g = if i % 20 == 0 { "hard" } else { "simple" };
                rec(i, r.random_range(40.0..90.0), r.random_range(40.0..90.0), g)
            })
            .collect();
        let a = replay_with(&records, &decider(Policy::Oracle), &rb(), Some("difficulty")).unwrap();
        records.reverse();
        let b = replay_with(&records, &decider(Policy::Oracle), &rb(), Some("difficulty")).unwrap();
        assert_eq!(a.report, b.report);
        let total: usize = a.report.groups.values().map(|g| g.n).sum();
        assert_eq!(total, 300);
        assert_eq!(a.report.groups["hard"].n, 15);
    }

    #[test]
    fn avg_is_unweighted_like_reference_table() {
        // NMT row of the zh-en integration table: groups News, Flores,
        // Literary, Tech with DA 78.99, 87.08, 59.71, 83.38 -> Avg 77.29.
        let base = ReplayReport {
            policy: "always_nmt".into(),
            n: 4000,
            score_kind: ScoreKind::ReferenceBased,
            mean_quality: 0.0,
            llm_p: 0.0,
            nmt_mean: 0.0,
            llm_mean: 0.0,
            group_by: Some("domain".into()),
            groups: BTreeMap::new(),
            diff_vs: None,
            dataset_fingerprint: "f".into(),
        };
        let mk = |policy: &str, vals: [(f64, f64, usize); 4]| {
            let mut r = base.clone();
            r.policy = policy.into();
            for (name, (q, p, n)) in ["a_news", "b_flores", "c_literary", "d_tech"].iter().zip(vals) {
                r.groups.insert((*name).into(), GroupStats { n, mean_quality: q, llm_p: p, nmt_mean: 0.0, llm_mean: 0.0 });
            }
            r
        };
        let nmt = mk("always_nmt", [(78.99, 0.0, 1000), (87.08, 0.0, 1012), (59.71, 0.0, 500), (83.38, 0.0, 1488)]);
        let qet = mk("qet", [(79.13, 0.2032, 1000), (87.08, 0.0030, 1012), (63.88, 0.62, 500), (80.21, 0.396, 1488)]);
        let cmp = compare_report(&[nmt, qet]).unwrap();
        let nmt_line = cmp.text.lines().find(|l| l.starts_with("always_nmt")).unwrap();
        let tail: Vec<&str> = nmt_line.split_whitespace().rev().take(2).collect();
        assert_eq!(tail, ["0.00%", "77.29"], "{nmt_line}");
        let qet_line = cmp.text.lines().find(|l| l.starts_with("qet")).unwrap();
        assert!(qet_line.contains("30.55%") || qet_line.contains("30.56%"), "{qet_line}");
        assert!(cmp.csv.starts_with("policy,group,n,mean_quality,llm_p\n"));
    }

    #[test]
    fn oracle_row_last_and_mismatch_rejected() {
        let records: Vec<EvalRecord> = (0..20).map(|i| rec(i, 50.0 + i as f64, 60.0, "x")).collect();
        let o = replay_with(&records, &decider(Policy::Oracle), &rb(), None).unwrap().report;
        let n = replay_with(&records, &decider(Policy::AlwaysNmt), &rb(), None).unwrap().report;
        let cmp = compare_report(&[o.clone(), n.clone()]).unwrap();
        let body: Vec<&str> = cmp.text.lines().skip(2).take(2).collect();
        assert!(body[0].starts_with("always_nmt"));
        assert!(body[1].starts_with("*oracle*"));
        assert!(cmp.text.contains("ties (q_llm = q_nmt) count as NMT"));
        let other = replay_with(&records[..10], &decider(Policy::AlwaysNmt), &rb(), None).unwrap().report;
        assert!(compare_report(&[o, other]).is_err());
    }

    #[test]
    fn diffs_between_reports() {
        let records: Vec<EvalRecord> = (0..10).map(|i| rec(i, 50.0, 60.0, "x")).collect();
        let mut reports = vec![
            replay_with(&records, &decider(Policy::AlwaysNmt), &rb(), None).unwrap().report,
            replay_with(&records, &decider(Policy::AlwaysLlm), &rb(), None).unwrap().report,
        ];
        attach_diffs(&mut reports);
        assert_eq!(reports[1].diff_vs.as_ref().unwrap()["always_nmt"], 10.0);
        assert_eq!(reports[0].diff_vs.as_ref().unwrap()["always_llm"], -10.0);
    }

    #[test]
    fn difficulty_layout_with_reference_means() {
        // Reference means: simple NMT 80.21 / LLM 81.62, hard 73.22 / 77.02.
        let mut records = Vec::new();
        for i in 0..95 {
            records.push(rec(i, 80.21, 81.62, "simple"));
        }
        for i in 95..100 {
            records.push(rec(i, 73.22, 77.02, "hard"));
        }
        let rep = replay_with(&records, &decider(Policy::AlwaysNmt), &rb(), Some("difficulty"))
            .unwrap()
            .report;
        let table = difficulty_table(&rep).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0].trim(), "simple (95.00%)  hard (5.00%)");
        assert!(lines[1].starts_with("NMT") && lines[1].contains("80.21") && lines[1].ends_with("73.22"));
        assert!(lines[2].starts_with("LLM") && lines[2].contains("81.62") && lines[2].ends_with("77.02"));
        assert!(lines[3].starts_with("Diff") && lines[3].contains("1.41") && lines[3].ends_with("3.80"));
    }

    #[test]
    fn sweep_needs_two_points_and_control() {
        let records: Vec<EvalRecord> = (0..10).map(|i| rec(i, 50.0, 60.0, "x")).collect();
        let prep = prepare(&records, &rb(), None, false).unwrap();
        assert!(pareto_sweep(&prep, &decider(Policy::Oracle), &[1.0, 2.0]).is_err());
        assert!(pareto_sweep(&prep, &decider(Policy::Qet), &[1.0]).is_err());
    }
}
