//! Lenient parsers for model responses. Bad lines are logged and skipped;
//! consensus voting takes care of the noise.

use std::collections::BTreeSet;

use super::inverse::{CandidateTriple, InverseMap};
use crate::model::Concept;

/// Longest line still treated as a concept rather than prose.
const MAX_CONCEPT_WORDS: usize = 12;

fn strip_list_marker(line: &str) -> &str {
    let line = line.trim();
    let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    let rest = &line[digits..];
    let rest = if digits > 0 {
        rest.strip_prefix(['.', ')', ':']).unwrap_or(line)
    } else {
        rest.trim_start_matches(['-', '*', '•', '–', '+'])
    };
    rest.trim()
}

fn strip_decoration(s: &str) -> &str {
    s.trim()
        .trim_matches(|c: char| matches!(c, '"' | '\'' | '`' | '*'))
        .trim_end_matches(['.', ',', ';'])
        .trim()
}

pub fn parse_concepts(response: &str) -> BTreeSet<Concept> {
    let mut out = BTreeSet::new();
    for (i, raw) in response.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let text = strip_decoration(strip_list_marker(raw));
        if text.is_empty() || text.ends_with(':') || text.split_whitespace().count() > MAX_CONCEPT_WORDS {
            tracing::warn!(line = i + 1, text = raw, "skipping unparseable concept line");
            continue;
        }
        match Concept::new(text) {
            Ok(c) => {
                out.insert(c);
            }
            Err(e) => tracing::warn!(line = i + 1, error = %e, "skipping concept line"),
        }
    }
    out
}

/// Splits `subject | relation | object` lines. Relations are resolved against
/// the canonical vocabulary and the inverse map; inverse forms are kept as
/// such for [`super::normalize_inverse`].
pub fn parse_triples(response: &str, inverses: &InverseMap) -> BTreeSet<CandidateTriple> {
    let mut out = BTreeSet::new();
    for (i, raw) in response.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.chars().all(|c| matches!(c, '|' | '-' | ':' | ' ')) {
            continue;
        }
        let line = strip_list_marker(line).trim_matches('|');
        let fields: Vec<&str> = line.split('|').map(strip_decoration).collect();
        let [subject, relation, object] = fields.as_slice() else {
            tracing::warn!(line = i + 1, text = raw, "expected 3 `|`-separated fields");
            continue;
        };
        let parsed = (|| {
            Ok::<_, crate::model::ModelError>(CandidateTriple {
                subject: Concept::new(subject)?,
                relation: inverses.resolve(relation)?,
                object: Concept::new(object)?,
            })
        })();
        match parsed {
            Ok(t) if t.subject == t.object => {
                tracing::warn!(line = i + 1, text = raw, "skipping self-loop triple")
            }
            Ok(t) => {
                out.insert(t);
            }
            Err(e) => tracing::warn!(line = i + 1, error = %e, "skipping triple line"),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::inverse::RelationForm;
    use super::*;
    use crate::model::RelationType;

    fn labels(set: &BTreeSet<Concept>) -> Vec<&str> {
        set.iter().map(Concept::normalized).collect()
    }

    #[test]
    fn concepts_strip_markers() {
        assert_eq!(labels(&parse_concepts("1. Yoga\n2. Fatigue")), ["fatigue", "yoga"]);
        assert_eq!(labels(&parse_concepts("- Yoga\n- yoga")), ["yoga"]);
        assert_eq!(
            labels(&parse_concepts("* **Body scan**\n• sleep.\n10) walking meditation")),
            ["body scan", "sleep", "walking meditation"]
        );
        assert!(parse_concepts("").is_empty());
    }

    #[test]
    fn concepts_skip_headings_and_prose() {
        let text =
            "Concepts:\n- yoga\nThis passage talks about many different things that are not concepts at all really.";
        assert_eq!(labels(&parse_concepts(text)), ["yoga"]);
    }

    #[test]
    fn hyphenated_concepts_survive() {
        assert_eq!(
            labels(&parse_concepts("- cancer-related fatigue")),
            ["cancer-related fatigue"]
        );
    }

    #[test]
    fn triples_basic() {
        let map = InverseMap::default();
        let out = parse_triples("yoga | treats | fatigue", &map);
        assert_eq!(out.len(), 1);
        let t = out.iter().next().unwrap();
        assert_eq!(t.subject.normalized(), "yoga");
        assert_eq!(t.relation, RelationForm::Canonical(RelationType::Treats));
        assert_eq!(t.object.normalized(), "fatigue");
    }

    #[test]
    fn triples_skip_malformed_and_unknown() {
        let map = InverseMap::default();
        assert!(parse_triples("yoga treats fatigue", &map).is_empty());
        let out = parse_triples("a | heals | b\nacupuncture | treats | fatigue", &map);
        assert_eq!(out.len(), 1);
        assert_eq!(out.iter().next().unwrap().subject.normalized(), "acupuncture");
        assert!(parse_triples("a | treats | b | c", &map).is_empty());
        assert!(parse_triples("yoga | is-a | Yoga", &map).is_empty());
    }

    #[test]
    fn triples_keep_inverse_forms_and_tables() {
        let map = InverseMap::default();
        let text = "| subject | relation | object |\n|---|---|---|\n| fatigue | treated_by | yoga |\n1. sleep | subClassOf | physical functioning";
        let out: Vec<_> = parse_triples(text, &map).into_iter().collect();
        // the header row fails relation lookup and is dropped
        assert_eq!(out.len(), 2);
        assert!(out
            .iter()
            .any(|t| t.relation == RelationForm::Inverse("treated-by".into())));
        assert!(out
            .iter()
            .any(|t| t.relation == RelationForm::Canonical(RelationType::IsA)));
    }
}
