//! TSV fixtures: gold standard (`concept_a, relation, concept_b,
//! classification, in_gpt`), extracted triples (`subject, relation, object,
//! in_gold, type`) and synonym groups.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::{EvalError, Stratum};
use crate::model::{normalize_label, Concept, DifficultyLevel, Provenance, RelationType, Triple};
use crate::pipeline::{normalize_inverse, CandidateTriple, InverseMap};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldEntry {
    pub triple: Triple,
    pub level: DifficultyLevel,
    pub found_by_model: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedRow {
    pub triple: Triple,
    pub in_gold: Option<bool>,
    pub level: Option<Stratum>,
}

fn read(path: &Path) -> Result<String, EvalError> {
    std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_err(line: usize, message: impl Into<String>) -> EvalError {
    EvalError::Parse {
        line,
        message: message.into(),
    }
}

/// Data rows as (1-based line number, fields); the header row and blank lines
/// are skipped.
fn data_rows<'a>(text: &'a str, header_start: &str) -> impl Iterator<Item = (usize, Vec<&'a str>)> + 'a {
    let header_start = header_start.to_ascii_lowercase();
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .filter(move |(i, l)| !(*i == 0 && l.trim().to_ascii_lowercase().starts_with(&header_start)))
        .map(|(i, l)| (i + 1, l.split('\t').collect()))
}

fn parse_triple(line: usize, s: &str, r: &str, o: &str) -> Result<Triple, EvalError> {
    let inverses = InverseMap::default();
    let candidate = (|| {
        Ok::<_, crate::model::ModelError>(CandidateTriple {
            subject: Concept::new(s)?,
            relation: inverses.resolve(r)?,
            object: Concept::new(o)?,
        })
    })()
    .map_err(|e| parse_err(line, e.to_string()))?;
    normalize_inverse(&candidate, &inverses).map_err(|e| parse_err(line, e.to_string()))
}

fn parse_flag(line: usize, raw: &str) -> Result<Option<bool>, EvalError> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "" | "-" => Ok(None),
        "yes" | "y" | "true" => Ok(Some(true)),
        "no" | "n" | "false" => Ok(Some(false)),
        other => Err(parse_err(line, format!("expected Yes/No, got `{other}`"))),
    }
}

fn parse_level(line: usize, raw: &str) -> Result<DifficultyLevel, EvalError> {
    raw.trim()
        .parse::<u8>()
        .map_err(|_| ())
        .and_then(|n| DifficultyLevel::try_from(n).map_err(|_| ()))
        .map_err(|_| parse_err(line, format!("difficulty level must be 1-4, got `{}`", raw.trim())))
}

pub fn parse_gold(text: &str) -> Result<Vec<GoldEntry>, EvalError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (line, fields) in data_rows(text, "concept") {
        let [a, r, b, level, found, ..] = fields.as_slice() else {
            return Err(parse_err(line, format!("expected 5 columns, got {}", fields.len())));
        };
        let triple = parse_triple(line, a, r, b)?.with_provenance(Provenance::Gold);
        let level = parse_level(line, level)?;
        let found_by_model = parse_flag(line, found)?.unwrap_or(false);
        if !seen.insert(triple.clone()) {
            tracing::warn!(line, triple = %triple, "duplicate gold row dropped");
            continue;
        }
        out.push(GoldEntry {
            triple,
            level,
            found_by_model,
        });
    }
    Ok(out)
}

pub fn load_gold(path: &Path) -> Result<Vec<GoldEntry>, EvalError> {
    parse_gold(&read(path)?)
}

pub fn parse_extracted(text: &str) -> Result<Vec<ExtractedRow>, EvalError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (line, fields) in data_rows(text, "subject") {
        if fields.len() < 3 {
            return Err(parse_err(
                line,
                format!("expected at least 3 columns, got {}", fields.len()),
            ));
        }
        let triple = parse_triple(line, fields[0], fields[1], fields[2])?;
        let in_gold = fields.get(3).map(|f| parse_flag(line, f)).transpose()?.flatten();
        let level = match fields.get(4).map(|f| f.trim()) {
            None | Some("") | Some("-") => None,
            Some(f) if f.eq_ignore_ascii_case("unclassified") => Some(Stratum::Unclassified),
            Some(f) => Some(Stratum::Level(parse_level(line, f)?)),
        };
        if !seen.insert(triple.clone()) {
            tracing::warn!(line, triple = %triple, "duplicate extracted row dropped");
            continue;
        }
        out.push(ExtractedRow { triple, in_gold, level });
    }
    Ok(out)
}

pub fn load_extracted(path: &Path) -> Result<Vec<ExtractedRow>, EvalError> {
    parse_extracted(&read(path)?)
}

pub fn write_extracted(rows: &[ExtractedRow]) -> String {
    let mut out = String::from("subject\trelation\tobject\tin_gold\ttype\n");
    for row in rows {
        let in_gold = match row.in_gold {
            Some(true) => "Yes",
            Some(false) => "No",
            None => "",
        };
        let level = row.level.map(|l| l.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{}\t{}\t{}\t{in_gold}\t{level}\n",
            row.triple.subject().label(),
            row.triple.relation(),
            row.triple.object().label()
        ));
    }
    out
}

/// Groups of labels treated as one concept when matching.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymMap {
    representative: BTreeMap<String, String>,
}

impl SynonymMap {
    /// One group per line, labels separated by `|`; `#` comments allowed.
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut groups: Vec<BTreeSet<String>> = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let group: BTreeSet<String> = line.split('|').filter_map(|l| normalize_label(l).ok()).collect();
            if !group.is_empty() {
                groups.push(group);
            }
        }
        Self::from_groups(groups)
    }

    pub fn from_groups<I, G, S>(groups: I) -> Result<Self, EvalError>
    where
        I: IntoIterator<Item = G>,
        G: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut representative = BTreeMap::new();
        for group in groups {
            let labels: BTreeSet<String> = group
                .into_iter()
                .filter_map(|l| normalize_label(l.as_ref()).ok())
                .collect();
            let Some(rep) = labels.iter().next().cloned() else {
                continue;
            };
            for label in labels {
                if representative.insert(label.clone(), rep.clone()).is_some() {
                    return Err(EvalError::SynonymOverlap(label));
                }
            }
        }
        Ok(Self { representative })
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Self::parse(&read(path)?)
    }

    /// Group representative for a normalized label (the label itself when
    /// ungrouped).
    pub fn canonical<'a>(&'a self, normalized: &'a str) -> &'a str {
        self.representative.get(normalized).map_or(normalized, String::as_str)
    }

    pub fn concept_key(&self, concept: &Concept) -> String {
        self.canonical(concept.normalized()).to_string()
    }

    pub fn triple_key(&self, triple: &Triple) -> (String, RelationType, String) {
        (
            self.concept_key(triple.subject()),
            triple.relation(),
            self.concept_key(triple.object()),
        )
    }
}
