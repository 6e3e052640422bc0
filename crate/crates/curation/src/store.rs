//! Candidate records and the append-only verdict log.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use ontogrow_core::evaluation::{
    match_triples, stratified_report_partial, stratum_of, Decision, GoldEntry, MatchResult, Resolutions,
    StratifiedReport, Stratum, SynonymMap,
};
use ontogrow_core::export::{to_owl_xml, ExportError, OntologyFragment};
use ontogrow_core::model::{Concept, RelationType, Triple, TripleId};
use ontogrow_core::terminology::MembershipOracle;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const SNIPPET_CHARS: usize = 240;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown triple id `{0}`")]
    NotFound(String),
    #[error("reviewer `{reviewer}` already ruled on `{triple_id}`")]
    Conflict { triple_id: String, reviewer: String },
    #[error("reviewer name is empty")]
    EmptyReviewer,
    #[error("required_verdicts must be at least 1")]
    InvalidPolicy,
    #[error("two candidates share id `{0}`")]
    DuplicateId(String),
    #[error("verdict log {path} line {line}: {message}")]
    CorruptLog { path: String, line: usize, message: String },
    #[error("verdict log {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Export(#[from] ExportError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Accepted,
    Declined,
}

impl std::str::FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pending" => Ok(Status::Pending),
            "accepted" => Ok(Status::Accepted),
            "declined" => Ok(Status::Declined),
            other => Err(format!("unknown status `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub triple_id: String,
    pub decision: Decision,
    pub reviewer: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub id: String,
    pub subject: String,
    pub relation: RelationType,
    pub object: String,
    pub votes: usize,
    pub level: Stratum,
    pub source_section: String,
    pub context_snippet: String,
    pub status: Status,
    /// Accept and decline verdicts both present; needs discussion.
    pub disputed: bool,
    pub accepts: usize,
    pub declines: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CandidateFilter {
    pub status: Option<Status>,
    pub level: Option<Stratum>,
    pub section: Option<String>,
}

impl CandidateFilter {
    fn admits(&self, r: &CandidateRecord) -> bool {
        self.status.is_none_or(|s| s == r.status)
            && self.level.is_none_or(|l| l == r.level)
            && self.section.as_deref().is_none_or(|s| s == r.source_section)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportView {
    pub report: StratifiedReport,
    /// Ids of candidates still awaiting a verdict.
    pub pending: Vec<String>,
    pub warning: Option<String>,
}

/// Everything the service needs to know about one extraction session.
pub struct SessionInputs {
    pub gold: Vec<GoldEntry>,
    pub extracted: Vec<Triple>,
    pub extracted_concepts: Option<BTreeSet<Concept>>,
    pub oracle: Arc<dyn MembershipOracle>,
    pub synonyms: SynonymMap,
    /// Source text used to attach a snippet to each candidate.
    pub context: Option<String>,
    pub base_iri: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Policy {
    pub required_verdicts: usize,
}

impl Default for Policy {
    fn default() -> Self {
        Self { required_verdicts: 1 }
    }
}

impl Policy {
    /// Accepted once enough accepts arrive with no decline; declined
    /// symmetrically; anything else stays pending.
    pub fn status(&self, accepts: usize, declines: usize) -> Status {
        if accepts >= self.required_verdicts && declines == 0 {
            Status::Accepted
        } else if declines >= self.required_verdicts && accepts == 0 {
            Status::Declined
        } else {
            Status::Pending
        }
    }
}

struct Entry {
    triple: Triple,
    record: CandidateRecord,
    reviewers: BTreeSet<String>,
}

pub struct Store {
    gold: Vec<GoldEntry>,
    matched: MatchResult,
    entries: BTreeMap<String, Entry>,
    order: Vec<String>,
    verdicts: Vec<Verdict>,
    policy: Policy,
    oracle: Arc<dyn MembershipOracle>,
    synonyms: SynonymMap,
    extracted_concepts: Option<BTreeSet<Concept>>,
    base_iri: String,
    log: Option<(PathBuf, File)>,
}

impl Store {
    /// Builds the candidate set and replays `log_path` if it exists. New
    /// verdicts are appended to the same file.
    pub fn open(inputs: SessionInputs, policy: Policy, log_path: Option<&Path>) -> Result<Self, StoreError> {
        let mut store = Self::new(inputs, policy)?;
        if let Some(path) = log_path {
            if path.exists() {
                store.replay(path)?;
            }
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|source| io_err(path, source))?;
            store.log = Some((path.to_path_buf(), file));
        }
        Ok(store)
    }

    pub fn new(inputs: SessionInputs, policy: Policy) -> Result<Self, StoreError> {
        if policy.required_verdicts == 0 {
            return Err(StoreError::InvalidPolicy);
        }
        let matched = match_triples(&inputs.extracted, &inputs.gold, &inputs.synonyms);
        let mut entries = BTreeMap::new();
        for t in &matched.fp_candidates {
            let id = t.id().0;
            let record = CandidateRecord {
                id: id.clone(),
                subject: t.subject().label().to_string(),
                relation: t.relation(),
                object: t.object().label().to_string(),
                votes: t.votes,
                level: stratum_of(t, inputs.oracle.as_ref()),
                source_section: t.source_section.clone(),
                context_snippet: inputs.context.as_deref().map(|c| snippet(c, t)).unwrap_or_default(),
                status: Status::Pending,
                disputed: false,
                accepts: 0,
                declines: 0,
            };
            let entry = Entry {
                triple: t.clone(),
                record,
                reviewers: BTreeSet::new(),
            };
            if entries.insert(id.clone(), entry).is_some() {
                return Err(StoreError::DuplicateId(id));
            }
        }
        let mut order: Vec<String> = entries.keys().cloned().collect();
        order.sort_by_key(|id| {
            let e = &entries[id];
            (e.record.level, e.triple.clone())
        });
        Ok(Self {
            gold: inputs.gold,
            matched,
            entries,
            order,
            verdicts: Vec::new(),
            policy,
            oracle: inputs.oracle,
            synonyms: inputs.synonyms,
            extracted_concepts: inputs.extracted_concepts,
            base_iri: inputs.base_iri,
            log: None,
        })
    }

    fn replay(&mut self, path: &Path) -> Result<(), StoreError> {
        let text = std::fs::read_to_string(path).map_err(|source| io_err(path, source))?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |message: String| StoreError::CorruptLog {
                path: path.display().to_string(),
                line: i + 1,
                message,
            };
            let verdict: Verdict = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
            self.apply(verdict).map_err(|e| corrupt(e.to_string()))?;
        }
        tracing::info!(verdicts = self.verdicts.len(), path = %path.display(), "verdict log replayed");
        Ok(())
    }

    fn apply(&mut self, verdict: Verdict) -> Result<CandidateRecord, StoreError> {
        let reviewer = verdict.reviewer.trim();
        if reviewer.is_empty() {
            return Err(StoreError::EmptyReviewer);
        }
        let entry = self
            .entries
            .get_mut(&verdict.triple_id)
            .ok_or_else(|| StoreError::NotFound(verdict.triple_id.clone()))?;
        if !entry.reviewers.insert(reviewer.to_string()) {
            return Err(StoreError::Conflict {
                triple_id: verdict.triple_id.clone(),
                reviewer: reviewer.to_string(),
            });
        }
        let r = &mut entry.record;
        match verdict.decision {
            Decision::Accept => r.accepts += 1,
            Decision::Decline => r.declines += 1,
        }
        r.status = self.policy.status(r.accepts, r.declines);
        r.disputed = r.accepts > 0 && r.declines > 0;
        let record = r.clone();
        self.verdicts.push(verdict);
        Ok(record)
    }

    pub fn submit_verdict(
        &mut self,
        triple_id: &str,
        decision: Decision,
        reviewer: &str,
    ) -> Result<CandidateRecord, StoreError> {
        let verdict = Verdict {
            triple_id: triple_id.to_string(),
            decision,
            reviewer: reviewer.trim().to_string(),
            timestamp: Utc::now(),
        };
        let record = self.apply(verdict.clone())?;
        if let Some((path, file)) = &mut self.log {
            let line = serde_json::to_string(&verdict).expect("verdict serializes");
            writeln!(file, "{line}")
                .and_then(|_| file.flush())
                .map_err(|source| io_err(path, source))?;
        }
        Ok(record)
    }

    pub fn list_candidates(&self, filter: &CandidateFilter) -> Vec<CandidateRecord> {
        self.order
            .iter()
            .map(|id| &self.entries[id].record)
            .filter(|r| filter.admits(r))
            .cloned()
            .collect()
    }

    pub fn candidate(&self, id: &str) -> Option<&CandidateRecord> {
        self.entries.get(id).map(|e| &e.record)
    }

    pub fn verdicts(&self) -> &[Verdict] {
        &self.verdicts
    }

    pub fn resolutions(&self) -> Resolutions {
        self.entries
            .values()
            .filter_map(|e| {
                let d = match e.record.status {
                    Status::Accepted => Decision::Accept,
                    Status::Declined => Decision::Decline,
                    Status::Pending => return None,
                };
                Some((TripleId(e.record.id.clone()), d))
            })
            .collect()
    }

    pub fn report(&self) -> ReportView {
        let (report, pending) = stratified_report_partial(
            &self.matched,
            &self.resolutions(),
            self.oracle.as_ref(),
            &self.synonyms,
            self.extracted_concepts.as_ref(),
        );
        let warning =
            (!pending.is_empty()).then(|| format!("{} candidate(s) await a verdict; report is partial", pending.len()));
        ReportView {
            report,
            pending: pending.iter().map(|t| t.id().0).collect(),
            warning,
        }
    }

    /// Gold triples plus accepted candidates.
    pub fn accepted_triples(&self) -> Vec<Triple> {
        let mut out: Vec<Triple> = self.gold.iter().map(|g| g.triple.clone()).collect();
        out.extend(
            self.entries
                .values()
                .filter(|e| e.record.status == Status::Accepted)
                .map(|e| e.triple.clone()),
        );
        out
    }

    pub fn export(&self) -> Result<String, StoreError> {
        Ok(to_owl_xml(&OntologyFragment::from_triples(
            self.accepted_triples(),
            self.base_iri.clone(),
        ))?)
    }

    pub fn gold_len(&self) -> usize {
        self.gold.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn io_err(path: &Path, source: std::io::Error) -> StoreError {
    StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// First sentence of `context` mentioning the subject or object, trimmed to a
/// bounded length.
fn snippet(context: &str, t: &Triple) -> String {
    let needles = [t.subject().normalized(), t.object().normalized()];
    let sentence = context
        .split_inclusive(['.', '\n', '!', '?'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .find(|s| {
            let lower = s.to_lowercase();
            needles.iter().any(|n| lower.contains(n))
        })
        .unwrap_or_default();
    let mut out: String = sentence.split_whitespace().collect::<Vec<_>>().join(" ");
    if out.chars().count() > SNIPPET_CHARS {
        out = out.chars().take(SNIPPET_CHARS).collect::<String>() + "…";
    }
    out
}
