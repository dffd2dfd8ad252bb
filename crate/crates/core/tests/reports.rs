mod support;

use std::path::Path;

use mtcascade::decider::Policy;
use mtcascade::evalharness::{attach_diffs, compare_report, difficulty_table, replay_with};
use mtcascade::scoring::Scorer;
use mtcascade::ScoreKind;

fn check_golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} drifted; rerun with UPDATE_GOLDEN=1 after review");
}

#[test]
fn domain_comparison_matches_golden() {
    let fx = support::Fixture::build();
    let records = support::records(800, 91, 0.2);
    let scorer = Scorer::builtin(ScoreKind::ReferenceBased);
    let mut reports: Vec<_> = [Policy::Oracle, Policy::AlwaysNmt, Policy::Qet, Policy::Pplt, Policy::Jdm]
        .into_iter()
        .map(|p| replay_with(&records, &fx.decider(p), &scorer, Some("domain")).unwrap().report)
        .collect();
    attach_diffs(&mut reports);
    let cmp = compare_report(&reports).unwrap();
    assert!(cmp.text.lines().any(|l| l.contains("*oracle*")));
    check_golden("domain_comparison.txt", &cmp.text);
    check_golden("domain_comparison.csv", &cmp.csv);
}

#[test]
fn difficulty_table_for_a_skewed_split() {
    let fx = support::Fixture::build();
    let records = support::records(400, 92, 0.3);
    let scorer = Scorer::builtin(ScoreKind::ReferenceBased);
    let out = replay_with(&records, &fx.decider(Policy::Qet), &scorer, Some("difficulty")).unwrap();
    let table = difficulty_table(&out.report).unwrap();
    assert!(table.lines().next().unwrap().contains("simple (70.00%)"));
    check_golden("difficulty_table_70_30.txt", &table);
}
