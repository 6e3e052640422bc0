//! Scoring extracted triples against an expert gold standard, stratified by
//! difficulty level.

mod report;
mod tables;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{
    extend_gold, precision, recall, reconcile, render_table, stratified_report, stratified_report_partial, Counts,
    Discrepancy, DiscrepancyKind, StratifiedReport, StratumRow,
};
pub use tables::{
    load_extracted, load_gold, parse_extracted, parse_gold, write_extracted, ExtractedRow, GoldEntry, SynonymMap,
};

use crate::model::{DifficultyLevel, SnomedStatus, Triple, TripleId};
use crate::terminology::MembershipOracle;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("label `{0}` appears in more than one synonym group")]
    SynonymOverlap(String),
    #[error("triple `{0}` has a concept of unknown SNOMED-CT membership")]
    Unclassified(String),
    #[error("{} candidate triple(s) still await a verdict", .0.len())]
    PendingVerdicts(Vec<Triple>),
}

/// A difficulty level, or the bucket for triples whose membership could not
/// be resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stratum {
    Level(DifficultyLevel),
    Unclassified,
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stratum::Level(l) => write!(f, "{l}"),
            Stratum::Unclassified => f.write_str("unclassified"),
        }
    }
}

impl std::str::FromStr for Stratum {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("unclassified") {
            return Ok(Stratum::Unclassified);
        }
        let n: u8 = s.parse().map_err(|_| format!("invalid level `{s}`"))?;
        DifficultyLevel::try_from(n).map(Stratum::Level)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum StratumRepr {
    Level(u8),
    Named(String),
}

impl Serialize for Stratum {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Stratum::Level(l) => StratumRepr::Level(l.number()),
            Stratum::Unclassified => StratumRepr::Named("unclassified".into()),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Stratum {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match StratumRepr::deserialize(deserializer)? {
            StratumRepr::Level(n) => DifficultyLevel::try_from(n)
                .map(Stratum::Level)
                .map_err(serde::de::Error::custom),
            StratumRepr::Named(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Assigns one of the four difficulty levels. Fails when either concept's
/// membership is unknown.
pub fn classify(triple: &Triple, oracle: &dyn MembershipOracle) -> Result<DifficultyLevel, EvalError> {
    let s = oracle.status(triple.subject());
    let o = oracle.status(triple.object());
    if s == SnomedStatus::Unknown || o == SnomedStatus::Unknown {
        return Err(EvalError::Unclassified(triple.to_string()));
    }
    Ok(DifficultyLevel::from_membership(
        s == SnomedStatus::InSnomed,
        o == SnomedStatus::InSnomed,
        triple.relation().is_a(),
    ))
}

pub fn stratum_of(triple: &Triple, oracle: &dyn MembershipOracle) -> Stratum {
    classify(triple, oracle).map_or(Stratum::Unclassified, Stratum::Level)
}

/// A gold row whose stated level disagrees with the classification rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelViolation {
    pub triple: Triple,
    pub stated: DifficultyLevel,
    pub computed: Stratum,
}

pub fn validate_gold_levels(gold: &[GoldEntry], oracle: &dyn MembershipOracle) -> Vec<LevelViolation> {
    gold.iter()
        .filter_map(|g| {
            let computed = stratum_of(&g.triple, oracle);
            (computed != Stratum::Level(g.level)).then(|| LevelViolation {
                triple: g.triple.clone(),
                stated: g.level,
                computed,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Decline,
}

/// Resolved expert decisions on fp candidates, keyed by triple id.
pub type Resolutions = BTreeMap<TripleId, Decision>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchedEntry {
    pub gold: GoldEntry,
    pub extracted: Triple,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchResult {
    pub true_positives: Vec<MatchedEntry>,
    pub false_negatives: Vec<GoldEntry>,
    /// Extracted triples absent from the gold standard, awaiting a verdict.
    pub fp_candidates: Vec<Triple>,
}

impl MatchResult {
    /// Every distinct extracted triple that took part in matching.
    pub fn extracted(&self) -> impl Iterator<Item = &Triple> {
        self.true_positives
            .iter()
            .map(|m| &m.extracted)
            .chain(self.fp_candidates.iter())
    }
}

/// Matches on exact relation and synonym-aware concept equality. Extracted
/// triples that collapse to the same key under the synonym map count once.
pub fn match_triples(extracted: &[Triple], gold: &[GoldEntry], synonyms: &SynonymMap) -> MatchResult {
    let mut by_key: BTreeMap<_, &Triple> = BTreeMap::new();
    for t in extracted {
        by_key
            .entry(synonyms.triple_key(t))
            .and_modify(|kept| {
                if t < *kept {
                    *kept = t;
                }
            })
            .or_insert(t);
    }
    let gold_keys: BTreeSet<_> = gold.iter().map(|g| synonyms.triple_key(&g.triple)).collect();

    let mut result = MatchResult::default();
    for g in gold {
        match by_key.get(&synonyms.triple_key(&g.triple)) {
            Some(t) => result.true_positives.push(MatchedEntry {
                gold: g.clone(),
                extracted: (*t).clone(),
            }),
            None => result.false_negatives.push(g.clone()),
        }
    }
    result.fp_candidates = by_key
        .into_iter()
        .filter(|(k, _)| !gold_keys.contains(k))
        .map(|(_, t)| t.clone())
        .collect();
    result.true_positives.sort_by(|a, b| a.gold.triple.cmp(&b.gold.triple));
    result.false_negatives.sort_by(|a, b| a.triple.cmp(&b.triple));
    result.fp_candidates.sort();
    result
}

/// Resolves fp candidates from an extracted table's `in_gold` column: Yes
/// accepts, No declines, blank leaves the candidate pending.
pub fn resolutions_from_column(rows: &[ExtractedRow], matched: &MatchResult) -> Resolutions {
    let column: BTreeMap<&Triple, Option<bool>> = rows.iter().map(|r| (&r.triple, r.in_gold)).collect();
    matched
        .fp_candidates
        .iter()
        .filter_map(|t| match column.get(t).copied().flatten() {
            Some(true) => Some((t.id(), Decision::Accept)),
            Some(false) => Some((t.id(), Decision::Decline)),
            None => None,
        })
        .collect()
}

/// Everything produced by scoring an extracted table against a gold table.
#[derive(Debug, Clone)]
pub struct TableEvaluation {
    pub matched: MatchResult,
    pub resolutions: Resolutions,
    pub report: StratifiedReport,
    pub pending: Vec<Triple>,
    pub violations: Vec<LevelViolation>,
}

/// Matches `rows` against `gold`, resolves candidates from the `in_gold`
/// column and builds the report. Candidates with a blank column stay pending.
pub fn evaluate_tables(
    gold: &[GoldEntry],
    rows: &[ExtractedRow],
    oracle: &dyn MembershipOracle,
    synonyms: &SynonymMap,
) -> TableEvaluation {
    let extracted: Vec<Triple> = rows.iter().map(|r| r.triple.clone()).collect();
    let matched = match_triples(&extracted, gold, synonyms);
    let resolutions = resolutions_from_column(rows, &matched);
    let (report, pending) = stratified_report_partial(&matched, &resolutions, oracle, synonyms, None);
    TableEvaluation {
        violations: validate_gold_levels(gold, oracle),
        matched,
        resolutions,
        report,
        pending,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terminology::Lexicon;

    fn t(s: &str, r: &str, o: &str) -> Triple {
        Triple::parse(s, r, o).unwrap()
    }

    fn gold(rows: &[(&str, &str, &str, u8)]) -> Vec<GoldEntry> {
        rows.iter()
            .map(|(s, r, o, l)| GoldEntry {
                triple: t(s, r, o),
                level: DifficultyLevel::try_from(*l).unwrap(),
                found_by_model: false,
            })
            .collect()
    }

    struct Unknowing;

    impl MembershipOracle for Unknowing {
        fn status_of(&self, label: &str) -> SnomedStatus {
            if label == "mystery" {
                SnomedStatus::Unknown
            } else {
                SnomedStatus::InSnomed
            }
        }
    }

    #[test]
    fn classification_rules() {
        let lex = Lexicon::from_labels(["fatigue", "acupuncture", "yoga", "stress"]);
        let cls = |s, r, o| classify(&t(s, r, o), &lex).unwrap();
        assert_eq!(cls("yoga", "is-a", "stress"), DifficultyLevel::One);
        assert_eq!(cls("walking meditation", "is-a", "yoga"), DifficultyLevel::Two);
        assert_eq!(cls("acupuncture", "treats", "fatigue"), DifficultyLevel::Three);
        assert_eq!(cls("yoga", "treats", "cancer patients"), DifficultyLevel::Four);
        assert_eq!(cls("body scan", "part-of", "insight meditation"), DifficultyLevel::Four);
        assert!(matches!(
            classify(&t("mystery", "treats", "fatigue"), &Unknowing),
            Err(EvalError::Unclassified(_))
        ));
        assert_eq!(
            stratum_of(&t("mystery", "treats", "fatigue"), &Unknowing),
            Stratum::Unclassified
        );
    }

    #[test]
    fn exact_match_leaves_nothing() {
        let g = gold(&[("yoga", "treats", "fatigue", 3), ("meditation", "part-of", "yoga", 1)]);
        let extracted: Vec<Triple> = g.iter().map(|e| e.triple.clone()).collect();
        let m = match_triples(&extracted, &g, &SynonymMap::default());
        assert_eq!(m.true_positives.len(), 2);
        assert!(m.false_negatives.is_empty());
        assert!(m.fp_candidates.is_empty());
    }

    #[test]
    fn relation_must_match_exactly() {
        let g = gold(&[("mindfulness-based stress reduction", "treats", "sleep", 3)]);
        let m = match_triples(
            &[t("Mindfulness-based stress reduction", "affects", "sleep")],
            &g,
            &SynonymMap::default(),
        );
        assert!(m.true_positives.is_empty());
        assert_eq!(m.fp_candidates.len(), 1);
        assert_eq!(m.false_negatives.len(), 1);
    }

    #[test]
    fn synonyms_bridge_labels() {
        let g = gold(&[("yoga", "affects", "overall QoL", 3)]);
        let syn = SynonymMap::from_groups([["quality of life", "overall qol"]]).unwrap();
        let m = match_triples(&[t("Yoga", "affects", "Quality of Life")], &g, &syn);
        assert_eq!(m.true_positives.len(), 1);
        let m = match_triples(&[t("Yoga", "affects", "Quality of Life")], &g, &SynonymMap::default());
        assert_eq!(m.fp_candidates.len(), 1);
    }

    #[test]
    fn novel_triple_is_candidate() {
        let g = gold(&[("mindfulness-based stress reduction", "treats", "stress", 3)]);
        let m = match_triples(
            &[
                t("Mindfulness-based stress reduction", "treats", "stress"),
                t("Yoga", "affects", "Cancer Patients"),
            ],
            &g,
            &SynonymMap::default(),
        );
        assert_eq!(m.true_positives.len(), 1);
        assert_eq!(m.fp_candidates, vec![t("yoga", "affects", "cancer patients")]);
    }

    #[test]
    fn stratum_serde() {
        let json = serde_json::to_string(&[Stratum::Level(DifficultyLevel::Three), Stratum::Unclassified]).unwrap();
        assert_eq!(json, r#"[3,"unclassified"]"#);
        let back: Vec<Stratum> = serde_json::from_str(&json).unwrap();
        assert_eq!(back[0], Stratum::Level(DifficultyLevel::Three));
        assert!(serde_json::from_str::<Stratum>("7").is_err());
        assert_eq!("2".parse::<Stratum>().unwrap(), Stratum::Level(DifficultyLevel::Two));
    }

    #[test]
    fn column_resolutions() {
        let g = gold(&[("yoga", "treats", "fatigue", 3)]);
        let rows = vec![
            ExtractedRow {
                triple: t("a", "treats", "b"),
                in_gold: Some(true),
                level: None,
            },
            ExtractedRow {
                triple: t("c", "treats", "d"),
                in_gold: Some(false),
                level: None,
            },
            ExtractedRow {
                triple: t("e", "treats", "f"),
                in_gold: None,
                level: None,
            },
        ];
        let extracted: Vec<Triple> = rows.iter().map(|r| r.triple.clone()).collect();
        let m = match_triples(&extracted, &g, &SynonymMap::default());
        let res = resolutions_from_column(&rows, &m);
        assert_eq!(res.len(), 2);
        assert_eq!(res[&t("a", "treats", "b").id()], Decision::Accept);
        assert_eq!(res[&t("c", "treats", "d").id()], Decision::Decline);
    }
}
