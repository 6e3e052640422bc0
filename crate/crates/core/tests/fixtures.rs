use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ontogrow_core::evaluation::{
    evaluate_tables, load_extracted, load_gold, reconcile, DiscrepancyKind, Stratum, SynonymMap,
};
use ontogrow_core::model::{DifficultyLevel, SnomedStatus};
use ontogrow_core::terminology::{load_lexicon, MembershipOracle};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn reconciliation() -> BTreeMap<String, usize> {
    std::fs::read_to_string(fixture("reconciliation.tsv"))
        .unwrap()
        .lines()
        .skip(1)
        .filter_map(|l| l.split_once('\t'))
        .map(|(k, v)| (k.to_string(), v.parse().unwrap()))
        .collect()
}

#[test]
fn gold_fixture_shape() {
    let gold = load_gold(&fixture("gold_table2.tsv")).unwrap();
    let expected = reconciliation();
    assert_eq!(gold.len(), expected["gold_rows_printed"]);
    for level in DifficultyLevel::ALL {
        let n = gold.iter().filter(|g| g.level == level).count();
        assert_eq!(
            n,
            expected[&format!("gold_rows_printed_level_{}", level.number())],
            "{level}"
        );
    }
    let first = &gold[0];
    assert_eq!(first.triple.to_string(), "Acupuncture | treats | fatigue");
    assert_eq!(first.level, DifficultyLevel::Three);
    assert!(first.found_by_model);
}

#[test]
fn lexicon_agrees_with_every_gold_row_membership() {
    let gold = load_gold(&fixture("gold_table2.tsv")).unwrap();
    let lexicon = load_lexicon(&fixture("snomed_lexicon.tsv")).unwrap();
    assert_eq!(lexicon.len(), reconciliation()["lexicon_members"]);
    for g in &gold {
        let both = [g.triple.subject(), g.triple.object()]
            .iter()
            .all(|c| lexicon.status(c) == SnomedStatus::InSnomed);
        assert_eq!(both, g.level.both_in_snomed(), "{}", g.triple);
    }
}

#[test]
fn fixture_evaluation_matches_reconciliation() {
    let gold = load_gold(&fixture("gold_table2.tsv")).unwrap();
    let rows = load_extracted(&fixture("extracted_table3.tsv")).unwrap();
    let lexicon = load_lexicon(&fixture("snomed_lexicon.tsv")).unwrap();
    let synonyms = SynonymMap::load(&fixture("synonyms.txt")).unwrap();
    let expected = reconciliation();
    assert_eq!(rows.len(), expected["extracted_unique"]);

    let eval = evaluate_tables(&gold, &rows, &lexicon, &synonyms);
    assert!(eval.pending.is_empty());
    assert_eq!(eval.violations.len(), expected["gold_level_rule_violations"]);
    assert_eq!(eval.violations[0].triple.to_string(), "meditation | part-of | yoga");

    let text = std::fs::read_to_string(fixture("reconciliation.tsv")).unwrap();
    let (checked, discrepancies) = reconcile(&eval.report, &text).unwrap();
    assert_eq!(checked, 16);
    assert!(
        discrepancies.iter().all(|d| d.kind == DiscrepancyKind::StatedVsPrinted),
        "{discrepancies:?}"
    );
    assert_eq!(discrepancies.len(), 1);

    let r = &eval.report;
    assert!(r.level(Stratum::Unclassified).is_none());
    let sum = |f: fn(&ontogrow_core::evaluation::Counts) -> usize| {
        r.per_level.iter().map(|row| f(&row.counts)).sum::<usize>()
    };
    assert_eq!(sum(|c| c.tp), r.overall.tp);
    assert_eq!(sum(|c| c.fn_), r.overall.fn_);
    assert_eq!(sum(|c| c.fp), r.overall.fp);
    assert_eq!(r.overall.tp + r.overall.fn_, r.gold_extended);
    assert_eq!(r.overall.tp + r.overall.fp, rows.len());
}

#[test]
fn synonym_fixture_groups_are_disjoint() {
    let map = SynonymMap::load(&fixture("synonyms.txt")).unwrap();
    assert_eq!(map.canonical("fatigue"), map.canonical("crf"));
    assert_eq!(
        map.canonical("psychosocial interventon"),
        map.canonical("psychosocial intervention")
    );
}
