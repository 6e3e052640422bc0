//! Two-step extraction: concepts first, then triples over the voted concepts,
//! each step repeated `n_runs` times and filtered by k-of-n consensus.

mod consensus;
mod inverse;
mod parse;
mod prompts;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use consensus::{consensus_vote, ConsensusError, Surface, Voted};
pub use inverse::{normalize_inverse, CandidateTriple, InverseMap, InverseTarget, RelationForm};
pub use parse::{parse_concepts, parse_triples};
pub use prompts::{
    build_concept_prompt, build_triple_prompt, ModelSettings, PromptError, PromptTemplate, PromptTemplates,
};

use crate::llm::{Backend, LlmError, PromptRequest};
use crate::model::{Concept, ExtractionRun, ModelError, Provenance, RelationType, Triple};

pub const DEFAULT_RUNS: usize = 10;
pub const DEFAULT_THRESHOLD: usize = 6;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("{stage} step: {source}")]
    Prompt {
        stage: &'static str,
        #[source]
        source: PromptError,
    },
    #[error("{stage} step: {source}")]
    Backend {
        stage: &'static str,
        #[source]
        source: LlmError,
    },
    #[error("{stage} step: all {runs} runs failed; last error: {last}")]
    AllRunsFailed {
        stage: &'static str,
        runs: usize,
        last: String,
    },
    #[error("{stage} step: {source}")]
    Consensus {
        stage: &'static str,
        #[source]
        source: ConsensusError,
    },
}

impl PipelineError {
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Prompt { stage, .. }
            | PipelineError::Backend { stage, .. }
            | PipelineError::AllRunsFailed { stage, .. }
            | PipelineError::Consensus { stage, .. } => stage,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub n_runs: usize,
    pub vote_threshold: usize,
    pub relation_vocabulary: Vec<RelationType>,
    pub include_inverses: bool,
    pub model: ModelSettings,
    /// Guideline subsection the context came from; stamped on every triple.
    pub source_section: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_runs: DEFAULT_RUNS,
            vote_threshold: DEFAULT_THRESHOLD,
            relation_vocabulary: RelationType::ALL.to_vec(),
            include_inverses: true,
            model: ModelSettings::default(),
            source_section: "main".to_string(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.n_runs == 0 {
            return Err(PipelineError::Config("n_runs must be at least 1".into()));
        }
        if self.vote_threshold == 0 || self.vote_threshold > self.n_runs {
            return Err(PipelineError::Config(format!(
                "vote_threshold {} must be in 1..={}",
                self.vote_threshold, self.n_runs
            )));
        }
        if !(0.0..=2.0).contains(&self.model.temperature) {
            return Err(PipelineError::Config(format!(
                "temperature {} outside [0, 2]",
                self.model.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub concepts: Vec<Voted<Concept>>,
    pub triples: Vec<Triple>,
    pub runs: Vec<ExtractionRun>,
}

/// Issues the same request `n` times. Transport failures become `Err`
/// entries (a failed run still counts toward N); other errors abort the
/// step, as does every run failing.
fn run_step(
    backend: &dyn Backend,
    request: &PromptRequest,
    n: usize,
    stage: &'static str,
) -> Result<Vec<Result<String, String>>, PipelineError> {
    let results: Vec<Result<String, LlmError>> = if backend.supports_concurrency() && n > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..n).map(|_| scope.spawn(|| backend.complete(request))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("completion thread panicked"))
                .collect()
        })
    } else {
        (0..n).map(|_| backend.complete(request)).collect()
    };
    let outcomes = results
        .into_iter()
        .enumerate()
        .map(|(i, r)| match r {
            Ok(text) => Ok(Ok(text)),
            Err(e) if e.is_transient() => {
                tracing::warn!(stage, run = i, error = %e, "run failed; counted as empty");
                Ok(Err(e.to_string()))
            }
            Err(source) => Err(PipelineError::Backend { stage, source }),
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(Err(last)) = outcomes.last().filter(|_| outcomes.iter().all(Result::is_err)) {
        return Err(PipelineError::AllRunsFailed {
            stage,
            runs: n,
            last: last.clone(),
        });
    }
    Ok(outcomes)
}

/// Runs both extraction steps and votes on each.
///
/// Step-2 triples are inverse-normalized per run before voting, so an
/// inverse phrasing and its canonical twin pool their votes.
pub fn run_pipeline(
    context: &str,
    config: &PipelineConfig,
    templates: &PromptTemplates,
    inverses: &InverseMap,
    backend: &dyn Backend,
) -> Result<PipelineOutput, PipelineError> {
    config.validate()?;
    let n = config.n_runs;

    let concept_request =
        build_concept_prompt(context, templates, &config.model).map_err(|source| PipelineError::Prompt {
            stage: "concepts",
            source,
        })?;
    let concept_responses = run_step(backend, &concept_request, n, "concepts")?;
    let concept_runs: Vec<Vec<Concept>> = concept_responses
        .iter()
        .map(|r| {
            r.as_ref()
                .map(|t| parse_concepts(t).into_iter().collect())
                .unwrap_or_default()
        })
        .collect();
    let concepts = consensus_vote(&concept_runs, config.vote_threshold).map_err(|source| PipelineError::Consensus {
        stage: "concepts",
        source,
    })?;
    tracing::info!(accepted = concepts.len(), "concept consensus");

    let voted: Vec<Concept> = concepts.iter().map(|v| v.item.clone()).collect();
    let triple_request = build_triple_prompt(
        context,
        &voted,
        &config.relation_vocabulary,
        config.include_inverses.then_some(inverses),
        templates,
        &config.model,
    )
    .map_err(|source| PipelineError::Prompt {
        stage: "triples",
        source,
    })?;
    let triple_responses = run_step(backend, &triple_request, n, "triples")?;
    let triple_runs: Vec<Vec<Triple>> = triple_responses
        .iter()
        .map(|r| match r {
            Ok(text) => parse_triples(text, inverses)
                .iter()
                .filter_map(|c| match normalize_inverse(c, inverses) {
                    Ok(t) => Some(t),
                    Err(e) => {
                        tracing::warn!(error = %e, "dropping triple during inverse normalization");
                        None
                    }
                })
                .collect(),
            Err(_) => Vec::new(),
        })
        .collect();
    let triples: Vec<Triple> = consensus_vote(&triple_runs, config.vote_threshold)
        .map_err(|source| PipelineError::Consensus {
            stage: "triples",
            source,
        })?
        .into_iter()
        .map(|v| {
            let mut t = v
                .item
                .with_provenance(Provenance::Llm)
                .with_section(&config.source_section);
            t.votes = v.votes;
            t
        })
        .collect();
    tracing::info!(accepted = triples.len(), "triple consensus");

    let runs = (0..n)
        .map(|i| {
            let mut errors = Vec::new();
            for r in [&concept_responses[i], &triple_responses[i]] {
                if let Err(e) = r {
                    errors.push(e.clone());
                }
            }
            let mut run_triples: Vec<&Triple> = triple_runs[i].iter().collect();
            run_triples.sort();
            run_triples.dedup();
            ExtractionRun {
                run_index: i,
                concepts: concept_runs[i].iter().map(|c| c.normalized().to_string()).collect(),
                triples: run_triples.iter().map(|t| canonical_line(t)).collect(),
                concept_response: concept_responses[i].as_ref().ok().cloned(),
                triple_response: triple_responses[i].as_ref().ok().cloned(),
                errors,
            }
        })
        .collect();

    Ok(PipelineOutput {
        concepts,
        triples,
        runs,
    })
}

fn canonical_line(t: &Triple) -> String {
    format!(
        "{} | {} | {}",
        t.subject().normalized(),
        t.relation(),
        t.object().normalized()
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotConcept {
    pub label: String,
    pub normalized_label: String,
    pub votes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotTriple {
    pub subject: String,
    pub relation: RelationType,
    pub object: String,
    pub votes: usize,
    pub source_section: String,
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("cannot read snapshot {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed snapshot {path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("invalid triple in snapshot: {0}")]
    Model(#[from] ModelError),
}

/// Consensus result of one extraction, as written by `extract` and loaded by
/// the evaluation, export and curation stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub source_section: String,
    pub n_runs: usize,
    pub vote_threshold: usize,
    pub concepts: Vec<SnapshotConcept>,
    pub triples: Vec<SnapshotTriple>,
}

impl Snapshot {
    pub fn empty() -> Self {
        Self {
            source_section: String::new(),
            n_runs: 0,
            vote_threshold: 0,
            concepts: Vec::new(),
            triples: Vec::new(),
        }
    }

    pub fn from_output(output: &PipelineOutput, config: &PipelineConfig) -> Self {
        Self {
            source_section: config.source_section.clone(),
            n_runs: config.n_runs,
            vote_threshold: config.vote_threshold,
            concepts: output
                .concepts
                .iter()
                .map(|v| SnapshotConcept {
                    label: v.item.label().to_string(),
                    normalized_label: v.item.normalized().to_string(),
                    votes: v.votes,
                })
                .collect(),
            triples: output
                .triples
                .iter()
                .map(|t| SnapshotTriple {
                    subject: t.subject().label().to_string(),
                    relation: t.relation(),
                    object: t.object().label().to_string(),
                    votes: t.votes,
                    source_section: t.source_section.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("snapshot serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, SnapshotError> {
        let text = std::fs::read_to_string(path).map_err(|source| SnapshotError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| SnapshotError::Json {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn concepts(&self) -> Result<Vec<Concept>, SnapshotError> {
        Ok(self
            .concepts
            .iter()
            .map(|c| Concept::new(&c.label))
            .collect::<Result<_, _>>()?)
    }

    pub fn triples(&self) -> Result<Vec<Triple>, SnapshotError> {
        self.triples
            .iter()
            .map(|t| {
                let mut triple = Triple::new(Concept::new(&t.subject)?, t.relation, Concept::new(&t.object)?)?
                    .with_provenance(Provenance::Llm)
                    .with_section(&t.source_section);
                triple.votes = t.votes;
                Ok(triple)
            })
            .collect()
    }
}
