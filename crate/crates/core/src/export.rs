//! OWL export as RDF/XML. Concepts become classes; is-a triples become plain
//! `rdfs:subClassOf` axioms and every other relation becomes a subclass of an
//! existential restriction (`subject ⊑ ∃relation.object`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{Concept, RelationType, Triple};

pub const DEFAULT_BASE_IRI: &str = "http://example.org/ontogrow";
pub const CONTENT_TYPE: &str = "application/rdf+xml";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExportError {
    #[error("triple `{triple}` references concept `{concept}` missing from the fragment")]
    Integrity { triple: String, concept: String },
    #[error("invalid base IRI `{0}`")]
    BaseIri(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OntologyFragment {
    pub concepts: BTreeSet<Concept>,
    pub triples: BTreeSet<Triple>,
    pub base_iri: String,
}

impl OntologyFragment {
    pub fn new(base_iri: impl Into<String>) -> Self {
        Self {
            concepts: BTreeSet::new(),
            triples: BTreeSet::new(),
            base_iri: base_iri.into(),
        }
    }

    /// Fragment holding `triples` and every concept they mention.
    pub fn from_triples<I: IntoIterator<Item = Triple>>(triples: I, base_iri: impl Into<String>) -> Self {
        let mut fragment = Self::new(base_iri);
        for t in triples {
            fragment.concepts.insert(t.subject().clone());
            fragment.concepts.insert(t.object().clone());
            fragment.triples.insert(t);
        }
        fragment
    }

    pub fn validate(&self) -> Result<(), ExportError> {
        let base = self.base_iri.trim();
        if base.is_empty() || base.contains(['#', ' ', '"', '<', '>']) {
            return Err(ExportError::BaseIri(self.base_iri.clone()));
        }
        for t in &self.triples {
            for c in [t.subject(), t.object()] {
                if !self.concepts.contains(c) {
                    return Err(ExportError::Integrity {
                        triple: t.to_string(),
                        concept: c.label().to_string(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// URL-safe slug: lowercase ASCII alphanumerics separated by single hyphens.
pub fn slug(normalized_label: &str) -> String {
    let mut out = String::new();
    for c in normalized_label.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.is_empty() && !out.ends_with('-') {
            out.push('-');
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    if out.is_empty() {
        out.push_str("concept");
    }
    out
}

/// Slugs for a concept set. Labels that share a slug all get a short hash
/// suffix of their normalized label.
fn assign_slugs(concepts: &BTreeSet<Concept>) -> BTreeMap<&str, String> {
    let mut by_slug: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for c in concepts {
        by_slug.entry(slug(c.normalized())).or_default().push(c.normalized());
    }
    let mut out = BTreeMap::new();
    for (s, labels) in by_slug {
        if labels.len() == 1 {
            out.insert(labels[0], s);
        } else {
            for label in labels {
                let digest = Sha256::digest(label.as_bytes());
                out.insert(label, format!("{s}-{}", &hex::encode(digest)[..8]));
            }
        }
    }
    out
}

pub fn relation_iri(base_iri: &str, relation: RelationType) -> String {
    format!("{}/relation#{}", base_iri.trim_end_matches('/'), relation.as_str())
}

fn class_iri(base_iri: &str, slug: &str) -> String {
    format!("{}#{slug}", base_iri.trim_end_matches('/'))
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// (kind, property or parent IRI, filler IRI) for one subclass axiom.
type Axiom = (u8, String, String);

/// Serializes the fragment. Output is sorted by IRI and byte-stable.
pub fn to_owl_xml(fragment: &OntologyFragment) -> Result<String, ExportError> {
    fragment.validate()?;
    let base = fragment.base_iri.trim().trim_end_matches('/');
    let slugs = assign_slugs(&fragment.concepts);
    let iri_of = |c: &Concept| class_iri(base, &slugs[c.normalized()]);

    let mut classes: BTreeMap<String, (&Concept, Vec<Axiom>)> =
        fragment.concepts.iter().map(|c| (iri_of(c), (c, Vec::new()))).collect();
    let mut properties = BTreeSet::new();
    for t in &fragment.triples {
        let filler = iri_of(t.object());
        let key = if t.relation().is_a() {
            (0, String::new(), filler)
        } else {
            let property = relation_iri(base, t.relation());
            properties.insert((property.clone(), t.relation()));
            (1, property, filler)
        };
        classes.get_mut(&iri_of(t.subject())).expect("validated").1.push(key);
    }

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<rdf:RDF xmlns:rdf="http://www.w3.org/1999/02/22-rdf-syntax-ns#" xmlns:rdfs="http://www.w3.org/2000/01/rdf-schema#" xmlns:owl="http://www.w3.org/2002/07/owl#" xml:base="{}">"#,
        escape(base)
    );
    let _ = writeln!(out, r#"  <owl:Ontology rdf:about="{}"/>"#, escape(base));
    for (iri, relation) in &properties {
        let _ = writeln!(out, r#"  <owl:ObjectProperty rdf:about="{}">"#, escape(iri));
        let _ = writeln!(out, "    <rdfs:label>{}</rdfs:label>", relation.as_str());
        let _ = writeln!(out, "  </owl:ObjectProperty>");
    }
    for (iri, (concept, mut axioms)) in classes {
        axioms.sort();
        let _ = writeln!(out, r#"  <owl:Class rdf:about="{}">"#, escape(&iri));
        let _ = writeln!(out, "    <rdfs:label>{}</rdfs:label>", escape(concept.label()));
        for (kind, property, filler) in axioms {
            if kind == 0 {
                let _ = writeln!(out, r#"    <rdfs:subClassOf rdf:resource="{}"/>"#, escape(&filler));
            } else {
                let _ = writeln!(out, "    <rdfs:subClassOf>");
                let _ = writeln!(out, "      <owl:Restriction>");
                let _ = writeln!(out, r#"        <owl:onProperty rdf:resource="{}"/>"#, escape(&property));
                let _ = writeln!(
                    out,
                    r#"        <owl:someValuesFrom rdf:resource="{}"/>"#,
                    escape(&filler)
                );
                let _ = writeln!(out, "      </owl:Restriction>");
                let _ = writeln!(out, "    </rdfs:subClassOf>");
            }
        }
        let _ = writeln!(out, "  </owl:Class>");
    }
    let _ = writeln!(out, "</rdf:RDF>");
    Ok(out)
}
