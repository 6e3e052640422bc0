//! Domain types shared by every stage: concepts, relation vocabulary, triples
//! and difficulty levels.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("label is empty after trimming")]
    EmptyLabel,
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("self-loop triple on `{0}`")]
    SelfLoop(String),
}

/// Case-folds, collapses internal whitespace and trims.
pub fn normalize_label(raw: &str) -> Result<String, ModelError> {
    let folded = raw
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ");
    if folded.is_empty() {
        Err(ModelError::EmptyLabel)
    } else {
        Ok(folded)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnomedStatus {
    InSnomed,
    NotInSnomed,
    Unknown,
}

/// A domain term. Equality, ordering and hashing use the normalized label only;
/// `label` keeps the surface spelling for display.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Concept {
    label: String,
    normalized_label: String,
    #[serde(default = "unknown_status")]
    pub snomed_status: SnomedStatus,
}

fn unknown_status() -> SnomedStatus {
    SnomedStatus::Unknown
}

impl Concept {
    pub fn new(label: &str) -> Result<Self, ModelError> {
        let normalized_label = normalize_label(label)?;
        Ok(Self {
            label: label.split_whitespace().collect::<Vec<_>>().join(" "),
            normalized_label,
            snomed_status: SnomedStatus::Unknown,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn normalized(&self) -> &str {
        &self.normalized_label
    }

    pub fn with_status(mut self, status: SnomedStatus) -> Self {
        self.snomed_status = status;
        self
    }
}

impl PartialEq for Concept {
    fn eq(&self, other: &Self) -> bool {
        self.normalized_label == other.normalized_label
    }
}

impl Eq for Concept {}

impl Hash for Concept {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.normalized_label.hash(state);
    }
}

impl PartialOrd for Concept {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Concept {
    fn cmp(&self, other: &Self) -> Ordering {
        self.normalized_label.cmp(&other.normalized_label)
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// The twelve UMLS semantic-network relations used for ontology extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelationType {
    IsA,
    PartOf,
    Treats,
    Affects,
    Uses,
    ResultOf,
    Contains,
    Manages,
    Disrupts,
    Complicates,
    InteractsWith,
    Prevents,
}

impl RelationType {
    pub const ALL: [RelationType; 12] = [
        RelationType::IsA,
        RelationType::PartOf,
        RelationType::Treats,
        RelationType::Affects,
        RelationType::Uses,
        RelationType::ResultOf,
        RelationType::Contains,
        RelationType::Manages,
        RelationType::Disrupts,
        RelationType::Complicates,
        RelationType::InteractsWith,
        RelationType::Prevents,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationType::IsA => "is-a",
            RelationType::PartOf => "part-of",
            RelationType::Treats => "treats",
            RelationType::Affects => "affects",
            RelationType::Uses => "uses",
            RelationType::ResultOf => "result-of",
            RelationType::Contains => "contains",
            RelationType::Manages => "manages",
            RelationType::Disrupts => "disrupts",
            RelationType::Complicates => "complicates",
            RelationType::InteractsWith => "interacts-with",
            RelationType::Prevents => "prevents",
        }
    }

    pub fn is_a(self) -> bool {
        self == RelationType::IsA
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationType {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        canonical_relation(s)
    }
}

/// Surface spellings accepted besides the canonical names (already in
/// [`relation_surface_key`] form).
const RELATION_ALIASES: &[(&str, RelationType)] = &[
    ("isa", RelationType::IsA),
    ("is-a-kind-of", RelationType::IsA),
    ("kind-of", RelationType::IsA),
    ("sub-class-of", RelationType::IsA),
    ("subclass-of", RelationType::IsA),
    ("subclassof", RelationType::IsA),
    ("partof", RelationType::PartOf),
    ("is-part-of", RelationType::PartOf),
    ("resultof", RelationType::ResultOf),
    ("is-result-of", RelationType::ResultOf),
    ("interacts", RelationType::InteractsWith),
    ("interactswith", RelationType::InteractsWith),
    ("interact-with", RelationType::InteractsWith),
    ("treat", RelationType::Treats),
    ("affect", RelationType::Affects),
    ("use", RelationType::Uses),
    ("contain", RelationType::Contains),
    ("manage", RelationType::Manages),
    ("disrupt", RelationType::Disrupts),
    ("complicate", RelationType::Complicates),
    ("prevent", RelationType::Prevents),
];

/// Folds a raw relation spelling into a comparable key: namespace prefix
/// dropped, camelCase split, lowercase, `_`/space/`-` runs collapsed to `-`.
pub fn relation_surface_key(raw: &str) -> String {
    let raw = raw.trim();
    let raw = raw.rsplit_once(':').map_or(raw, |(_, local)| local);
    let mut out = String::with_capacity(raw.len() + 4);
    let mut prev_lower = false;
    for ch in raw.chars() {
        if ch.is_uppercase() && prev_lower {
            out.push('-');
        }
        if ch == '_' || ch == '-' || ch.is_whitespace() {
            if !out.is_empty() && !out.ends_with('-') {
                out.push('-');
            }
            prev_lower = false;
            continue;
        }
        prev_lower = ch.is_lowercase() || ch.is_ascii_digit();
        out.extend(ch.to_lowercase());
    }
    while out.ends_with('-') {
        out.pop();
    }
    out
}

fn exact_relation(key: &str) -> Option<RelationType> {
    RelationType::ALL
        .iter()
        .copied()
        .find(|r| r.as_str() == key)
        .or_else(|| {
            RELATION_ALIASES
                .iter()
                .find(|(alias, _)| *alias == key)
                .map(|(_, r)| *r)
        })
}

/// Largest edit distance tolerated against an alias of the given length.
/// Never above 2; short aliases get less room so that e.g. "causes" does not
/// collapse onto "uses".
fn typo_budget(alias_len: usize) -> usize {
    (alias_len / 4).min(2)
}

pub(crate) fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            cur[j] = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Maps a surface relation spelling onto the canonical vocabulary.
///
/// Exact matches against canonical names and the alias table win; otherwise
/// the closest alias within its typo budget is taken, provided the best match
/// is unambiguous.
pub fn canonical_relation(raw: &str) -> Result<RelationType, ModelError> {
    let key = relation_surface_key(raw);
    if key.is_empty() {
        return Err(ModelError::UnknownRelation(raw.to_string()));
    }
    if let Some(rel) = exact_relation(&key) {
        return Ok(rel);
    }
    let candidates = RelationType::ALL
        .iter()
        .map(|r| (r.as_str(), *r))
        .chain(RELATION_ALIASES.iter().copied());
    let mut best: Option<(usize, RelationType)> = None;
    let mut ambiguous = false;
    for (alias, rel) in candidates {
        let d = edit_distance(&key, alias);
        if d > typo_budget(alias.chars().count()) {
            continue;
        }
        match best {
            Some((bd, _)) if d > bd => {}
            Some((bd, brel)) if d == bd => ambiguous |= brel != rel,
            _ => {
                best = Some((d, rel));
                ambiguous = false;
            }
        }
    }
    match best {
        Some((_, rel)) if !ambiguous => Ok(rel),
        _ => Err(ModelError::UnknownRelation(raw.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Gold,
    Llm,
    ExpertAdded,
}

/// Stable identifier of a canonical triple: hex prefix of a SHA-256 over the
/// normalized labels and relation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TripleId(pub String);

impl fmt::Display for TripleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A (subject, relation, object) assertion. Like [`Concept`], equality covers
/// the assertion only; provenance, votes and section are annotations.
#[derive(Debug, Clone)]
pub struct Triple {
    subject: Concept,
    relation: RelationType,
    object: Concept,
    pub provenance: Provenance,
    pub votes: usize,
    pub source_section: String,
}

impl Triple {
    pub fn new(subject: Concept, relation: RelationType, object: Concept) -> Result<Self, ModelError> {
        if subject == object {
            return Err(ModelError::SelfLoop(subject.normalized().to_string()));
        }
        Ok(Self {
            subject,
            relation,
            object,
            provenance: Provenance::Llm,
            votes: 0,
            source_section: String::new(),
        })
    }

    /// Convenience constructor from raw labels and a raw relation spelling.
    pub fn parse(subject: &str, relation: &str, object: &str) -> Result<Self, ModelError> {
        Self::new(
            Concept::new(subject)?,
            canonical_relation(relation)?,
            Concept::new(object)?,
        )
    }

    pub fn subject(&self) -> &Concept {
        &self.subject
    }

    pub fn relation(&self) -> RelationType {
        self.relation
    }

    pub fn object(&self) -> &Concept {
        &self.object
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn with_section(mut self, section: impl Into<String>) -> Self {
        self.source_section = section.into();
        self
    }

    pub fn id(&self) -> TripleId {
        let mut hasher = Sha256::new();
        hasher.update(self.subject.normalized().as_bytes());
        hasher.update([0x1f]);
        hasher.update(self.relation.as_str().as_bytes());
        hasher.update([0x1f]);
        hasher.update(self.object.normalized().as_bytes());
        TripleId(hex::encode(&hasher.finalize()[..8]))
    }

    fn key(&self) -> (&str, RelationType, &str) {
        (self.subject.normalized(), self.relation, self.object.normalized())
    }
}

impl PartialEq for Triple {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Triple {}

impl Hash for Triple {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state);
    }
}

impl PartialOrd for Triple {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Triple {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} | {} | {}", self.subject, self.relation, self.object)
    }
}

/// Difficulty stratum of a triple, decided by SNOMED-CT membership of both
/// concepts and whether the relation is is-a.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum DifficultyLevel {
    /// Both concepts in SNOMED-CT, relation is-a.
    One,
    /// At most one concept in SNOMED-CT, relation is-a.
    Two,
    /// Both concepts in SNOMED-CT, any other relation.
    Three,
    /// At most one concept in SNOMED-CT, any other relation.
    Four,
}

impl DifficultyLevel {
    pub const ALL: [DifficultyLevel; 4] = [
        DifficultyLevel::One,
        DifficultyLevel::Two,
        DifficultyLevel::Three,
        DifficultyLevel::Four,
    ];

    pub fn from_membership(subject_in: bool, object_in: bool, is_a: bool) -> Self {
        match (subject_in && object_in, is_a) {
            (true, true) => DifficultyLevel::One,
            (false, true) => DifficultyLevel::Two,
            (true, false) => DifficultyLevel::Three,
            (false, false) => DifficultyLevel::Four,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            DifficultyLevel::One => 1,
            DifficultyLevel::Two => 2,
            DifficultyLevel::Three => 3,
            DifficultyLevel::Four => 4,
        }
    }

    pub fn both_in_snomed(self) -> bool {
        matches!(self, DifficultyLevel::One | DifficultyLevel::Three)
    }

    pub fn is_a(self) -> bool {
        matches!(self, DifficultyLevel::One | DifficultyLevel::Two)
    }
}

impl TryFrom<u8> for DifficultyLevel {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            1 => Ok(DifficultyLevel::One),
            2 => Ok(DifficultyLevel::Two),
            3 => Ok(DifficultyLevel::Three),
            4 => Ok(DifficultyLevel::Four),
            other => Err(format!("difficulty level must be 1-4, got {other}")),
        }
    }
}

impl From<DifficultyLevel> for u8 {
    fn from(level: DifficultyLevel) -> u8 {
        level.number()
    }
}

impl fmt::Display for DifficultyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// One of the N stochastic extraction runs, kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRun {
    pub run_index: usize,
    pub concepts: Vec<String>,
    pub triples: Vec<String>,
    pub concept_response: Option<String>,
    pub triple_response: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}
