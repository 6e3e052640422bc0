//! Prompt templates for the two extraction steps.
//!
//! A template file holds the system message, a line containing only `---`,
//! then the user message. Placeholders: `{{context}}` (both steps),
//! `{{concepts}}` and `{{relations}}` (triple step).

use std::path::Path;

use thiserror::Error;

use super::inverse::InverseMap;
use crate::llm::PromptRequest;
use crate::model::{Concept, RelationType};

const DEFAULT_CONCEPT_TEMPLATE: &str = include_str!("../../templates/concepts.txt");
const DEFAULT_TRIPLE_TEMPLATE: &str = include_str!("../../templates/triples.txt");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("context is empty")]
    EmptyContext,
    #[error("no concepts to relate")]
    NoConcepts,
    #[error("relation vocabulary is empty")]
    EmptyVocabulary,
    #[error("template is missing placeholder {0}")]
    MissingPlaceholder(&'static str),
    #[error("cannot read template {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub system: String,
    pub user: String,
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Self {
        let mut system = Vec::new();
        let mut lines = text.lines();
        let mut split = false;
        for line in lines.by_ref() {
            if line.trim() == "---" {
                split = true;
                break;
            }
            system.push(line);
        }
        if !split {
            return Self {
                system: String::new(),
                user: text.trim_end().to_string(),
            };
        }
        let user: Vec<&str> = lines.collect();
        Self {
            system: system.join("\n").trim().to_string(),
            user: user.join("\n").trim().to_string(),
        }
    }

    fn require(&self, placeholder: &'static str) -> Result<(), PromptError> {
        if self.user.contains(placeholder) || self.system.contains(placeholder) {
            Ok(())
        } else {
            Err(PromptError::MissingPlaceholder(placeholder))
        }
    }

    fn render(&self, vars: &[(&str, &str)]) -> (String, String) {
        let fill = |s: &str| {
            vars.iter()
                .fold(s.to_string(), |acc, (k, v)| acc.replace(&format!("{{{{{k}}}}}"), v))
        };
        (fill(&self.system), fill(&self.user))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub concepts: PromptTemplate,
    pub triples: PromptTemplate,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            concepts: PromptTemplate::parse(DEFAULT_CONCEPT_TEMPLATE),
            triples: PromptTemplate::parse(DEFAULT_TRIPLE_TEMPLATE),
        }
    }
}

impl PromptTemplates {
    /// Loads templates from files, falling back to the bundled ones for any
    /// path not given.
    pub fn load(concepts: Option<&Path>, triples: Option<&Path>) -> Result<Self, PromptError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p)
                .map(|t| PromptTemplate::parse(&t))
                .map_err(|source| PromptError::Io {
                    path: p.display().to_string(),
                    source,
                })
        };
        let defaults = Self::default();
        let templates = Self {
            concepts: concepts.map(read).transpose()?.unwrap_or(defaults.concepts),
            triples: triples.map(read).transpose()?.unwrap_or(defaults.triples),
        };
        templates.concepts.require("{{context}}")?;
        for p in ["{{context}}", "{{concepts}}", "{{relations}}"] {
            templates.triples.require(p)?;
        }
        Ok(templates)
    }
}

/// Model settings stamped on every request.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSettings {
    pub model_id: String,
    pub temperature: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            model_id: crate::llm::DEFAULT_MODEL.to_string(),
            temperature: crate::llm::DEFAULT_TEMPERATURE,
        }
    }
}

fn request(template: &PromptTemplate, vars: &[(&str, &str)], model: &ModelSettings) -> PromptRequest {
    let (system_message, user_message) = template.render(vars);
    PromptRequest {
        system_message,
        user_message,
        temperature: model.temperature,
        model_id: model.model_id.clone(),
    }
}

pub fn build_concept_prompt(
    context: &str,
    templates: &PromptTemplates,
    model: &ModelSettings,
) -> Result<PromptRequest, PromptError> {
    if context.trim().is_empty() {
        return Err(PromptError::EmptyContext);
    }
    Ok(request(&templates.concepts, &[("context", context)], model))
}

/// Lists concepts (sorted by normalized label) and the relation vocabulary,
/// with inverse forms appended when `include_inverses` is set.
pub fn build_triple_prompt(
    context: &str,
    concepts: &[Concept],
    vocabulary: &[RelationType],
    inverses: Option<&InverseMap>,
    templates: &PromptTemplates,
    model: &ModelSettings,
) -> Result<PromptRequest, PromptError> {
    if context.trim().is_empty() {
        return Err(PromptError::EmptyContext);
    }
    if concepts.is_empty() {
        return Err(PromptError::NoConcepts);
    }
    if vocabulary.is_empty() {
        return Err(PromptError::EmptyVocabulary);
    }
    let mut sorted: Vec<&Concept> = concepts.iter().collect();
    sorted.sort();
    sorted.dedup();
    let concept_list = sorted
        .iter()
        .map(|c| format!("- {}", c.label()))
        .collect::<Vec<_>>()
        .join("\n");
    let mut relation_lines: Vec<String> = vocabulary.iter().map(|r| format!("- {r}")).collect();
    if let Some(map) = inverses {
        relation_lines.extend(
            map.forms_for(vocabulary)
                .map(|(name, canonical)| format!("- {name} (inverse of {canonical})")),
        );
    }
    let relations = relation_lines.join("\n");
    Ok(request(
        &templates.triples,
        // context goes last so placeholder-like text inside it is left alone
        &[
            ("concepts", &concept_list),
            ("relations", &relations),
            ("context", context),
        ],
        model,
    ))
}
