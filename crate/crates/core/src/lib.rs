//! Extending a clinical terminology with relations extracted by a language
//! model: domain model, model gateway, extraction pipeline, membership
//! lookups, evaluation and OWL export.

pub mod evaluation;
pub mod export;
pub mod llm;
pub mod model;
pub mod pipeline;
pub mod terminology;
