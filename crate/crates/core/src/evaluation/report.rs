//! Precision/recall, stratified reports and count reconciliation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{classify, stratum_of, Decision, EvalError, GoldEntry, MatchResult, Resolutions, Stratum, SynonymMap};
use crate::model::{Concept, DifficultyLevel, Provenance, Triple};
use crate::terminology::MembershipOracle;

/// `tp / (tp + fp)`, or `None` when nothing was predicted.
pub fn precision(tp: usize, fp: usize) -> Option<f64> {
    ratio(tp, tp + fp)
}

/// `tp / (tp + fn)`, or `None` when there is nothing to find.
pub fn recall(tp: usize, fn_: usize) -> Option<f64> {
    ratio(tp, tp + fn_)
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fp: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

impl Counts {
    pub fn new(tp: usize, fn_: usize, fp: usize) -> Self {
        Self {
            tp,
            fn_,
            fp,
            precision: precision(tp, fp),
            recall: recall(tp, fn_),
        }
    }

    pub fn zero() -> Self {
        Self::new(0, 0, 0)
    }

    fn plus(self, other: Counts) -> Self {
        Self::new(self.tp + other.tp, self.fn_ + other.fn_, self.fp + other.fp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRow {
    pub stratum: Stratum,
    #[serde(flatten)]
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedReport {
    /// Levels 1-4 always, plus an unclassified row when any triple needed it.
    pub per_level: Vec<StratumRow>,
    pub overall: Counts,
    pub concepts: Counts,
    pub gold_initial: usize,
    pub gold_extended: usize,
}

impl StratifiedReport {
    /// Builds a report straight from per-stratum counts. `overall` is the sum.
    pub fn from_counts(per_level: BTreeMap<Stratum, (usize, usize, usize)>, concepts: Counts) -> Self {
        let mut tallies: BTreeMap<Stratum, Counts> = DifficultyLevel::ALL
            .iter()
            .map(|l| (Stratum::Level(*l), Counts::zero()))
            .collect();
        for (stratum, (tp, fn_, fp)) in per_level {
            tallies.insert(stratum, Counts::new(tp, fn_, fp));
        }
        let overall = tallies.values().fold(Counts::zero(), |acc, c| acc.plus(*c));
        let gold_initial = overall.tp + overall.fn_;
        Self {
            per_level: tallies
                .into_iter()
                .map(|(stratum, counts)| StratumRow { stratum, counts })
                .collect(),
            overall,
            concepts,
            gold_initial,
            gold_extended: gold_initial,
        }
    }

    pub fn level(&self, stratum: Stratum) -> Option<&Counts> {
        self.per_level.iter().find(|r| r.stratum == stratum).map(|r| &r.counts)
    }
}

/// Strict report: fails while any fp candidate lacks a verdict.
pub fn stratified_report(
    matched: &MatchResult,
    resolutions: &Resolutions,
    oracle: &dyn MembershipOracle,
    synonyms: &SynonymMap,
    extracted_concepts: Option<&BTreeSet<Concept>>,
) -> Result<StratifiedReport, EvalError> {
    let (report, pending) = stratified_report_partial(matched, resolutions, oracle, synonyms, extracted_concepts);
    if pending.is_empty() {
        Ok(report)
    } else {
        Err(EvalError::PendingVerdicts(pending))
    }
}

/// Report over resolved candidates only, plus the still-pending ones.
///
/// Matched and missed gold entries count at their stated level; candidates
/// are classified against `oracle`. Accepted candidates become TP and extend
/// the gold standard, declined ones are FP. Concept metrics compare the
/// extended gold concept set with `extracted_concepts` (or the endpoints of
/// the extracted triples when not given).
pub fn stratified_report_partial(
    matched: &MatchResult,
    resolutions: &Resolutions,
    oracle: &dyn MembershipOracle,
    synonyms: &SynonymMap,
    extracted_concepts: Option<&BTreeSet<Concept>>,
) -> (StratifiedReport, Vec<Triple>) {
    let mut tallies: BTreeMap<Stratum, (usize, usize, usize)> = BTreeMap::new();
    for m in &matched.true_positives {
        tallies.entry(Stratum::Level(m.gold.level)).or_default().0 += 1;
    }
    for g in &matched.false_negatives {
        tallies.entry(Stratum::Level(g.level)).or_default().1 += 1;
    }

    let mut gold_concepts: BTreeSet<String> = matched
        .true_positives
        .iter()
        .map(|m| &m.gold)
        .chain(&matched.false_negatives)
        .flat_map(|g| endpoint_keys(&g.triple, synonyms))
        .collect();

    let mut pending = Vec::new();
    let mut accepted = 0;
    for t in &matched.fp_candidates {
        let Some(decision) = resolutions.get(&t.id()) else {
            pending.push(t.clone());
            continue;
        };
        let slot = tallies.entry(stratum_of(t, oracle)).or_default();
        match decision {
            Decision::Accept => {
                slot.0 += 1;
                accepted += 1;
                gold_concepts.extend(endpoint_keys(t, synonyms));
            }
            Decision::Decline => slot.2 += 1,
        }
    }

    let extracted: BTreeSet<String> = match extracted_concepts {
        Some(set) => set.iter().map(|c| synonyms.concept_key(c)).collect(),
        None => matched.extracted().flat_map(|t| endpoint_keys(t, synonyms)).collect(),
    };
    let concepts = Counts::new(
        gold_concepts.intersection(&extracted).count(),
        gold_concepts.difference(&extracted).count(),
        extracted.difference(&gold_concepts).count(),
    );

    let mut report = StratifiedReport::from_counts(tallies, concepts);
    report.gold_initial = matched.true_positives.len() + matched.false_negatives.len();
    report.gold_extended = report.gold_initial + accepted;
    (report, pending)
}

fn endpoint_keys(t: &Triple, synonyms: &SynonymMap) -> [String; 2] {
    [synonyms.concept_key(t.subject()), synonyms.concept_key(t.object())]
}

/// Gold standard plus accepted candidates, tagged `expert-added`.
pub fn extend_gold(
    gold: &[GoldEntry],
    matched: &MatchResult,
    resolutions: &Resolutions,
    oracle: &dyn MembershipOracle,
) -> Result<Vec<GoldEntry>, EvalError> {
    let mut out = gold.to_vec();
    for t in &matched.fp_candidates {
        if resolutions.get(&t.id()) == Some(&Decision::Accept) {
            out.push(GoldEntry {
                triple: t.clone().with_provenance(Provenance::ExpertAdded),
                level: classify(t, oracle)?,
                found_by_model: true,
            });
        }
    }
    Ok(out)
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "—".to_string(), |v| format!("{v:.3}"))
}

/// Aligned text table; undefined metrics render as "—".
pub fn render_table(report: &StratifiedReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<14}{:>5}{:>5}{:>5}{:>11}{:>9}",
        "stratum", "TP", "FN", "FP", "precision", "recall"
    );
    let mut row = |name: String, c: &Counts| {
        let _ = writeln!(
            out,
            "{:<14}{:>5}{:>5}{:>5}{:>11}{:>9}",
            name,
            c.tp,
            c.fn_,
            c.fp,
            fmt_metric(c.precision),
            fmt_metric(c.recall)
        );
    };
    for r in &report.per_level {
        let name = match r.stratum {
            Stratum::Level(l) => format!("level {l}"),
            Stratum::Unclassified => "unclassified".into(),
        };
        row(name, &r.counts);
    }
    row("overall".into(), &report.overall);
    row("concepts".into(), &report.concepts);
    let _ = writeln!(
        out,
        "gold relations: {} -> {}",
        report.gold_initial, report.gold_extended
    );
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscrepancyKind {
    /// The report disagrees with an expected count.
    Mismatch,
    /// A stated total differs from what is actually printed in the source table.
    StatedVsPrinted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Discrepancy {
    pub kind: DiscrepancyKind,
    pub key: String,
    pub expected: String,
    pub actual: String,
}

/// Compares a report with a `key<TAB>value` reconciliation file. Keys
/// `level_N_{tp,fn,fp}`, `overall_{tp,fn,fp}` and `gold_rows_extended` are
/// checked; `gold_rows_stated` vs `gold_rows_printed` is surfaced as a note.
/// Returns the number of checked keys and every discrepancy.
pub fn reconcile(report: &StratifiedReport, text: &str) -> Result<(usize, Vec<Discrepancy>), EvalError> {
    let mut values = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('\t') else {
            return Err(EvalError::Parse {
                line: i + 1,
                message: "expected key<TAB>value".into(),
            });
        };
        values.insert(key.trim().to_string(), value.trim().to_string());
    }

    let mut actual: BTreeMap<String, usize> = BTreeMap::new();
    for row in &report.per_level {
        let Stratum::Level(l) = row.stratum else { continue };
        let n = l.number();
        actual.insert(format!("level_{n}_tp"), row.counts.tp);
        actual.insert(format!("level_{n}_fn"), row.counts.fn_);
        actual.insert(format!("level_{n}_fp"), row.counts.fp);
    }
    actual.insert("overall_tp".into(), report.overall.tp);
    actual.insert("overall_fn".into(), report.overall.fn_);
    actual.insert("overall_fp".into(), report.overall.fp);
    actual.insert("gold_rows_extended".into(), report.gold_extended);

    let mut checked = 0;
    let mut found = Vec::new();
    for (key, got) in &actual {
        let Some(expected) = values.get(key) else { continue };
        checked += 1;
        if expected.parse::<usize>().ok() != Some(*got) {
            found.push(Discrepancy {
                kind: DiscrepancyKind::Mismatch,
                key: key.clone(),
                expected: expected.clone(),
                actual: got.to_string(),
            });
        }
    }
    if let (Some(stated), Some(printed)) = (values.get("gold_rows_stated"), values.get("gold_rows_printed")) {
        if stated != printed {
            found.push(Discrepancy {
                kind: DiscrepancyKind::StatedVsPrinted,
                key: "gold_rows".into(),
                expected: stated.clone(),
                actual: printed.clone(),
            });
        }
    }
    Ok((checked, found))
}
