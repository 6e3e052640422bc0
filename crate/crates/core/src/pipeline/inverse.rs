use std::collections::BTreeMap;
use std::fmt;

use crate::model::{canonical_relation, relation_surface_key, Concept, ModelError, RelationType, Triple};

/// A relation as the model wrote it: either a canonical name (possibly after
/// alias/typo repair) or an inverse surface form awaiting normalization.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelationForm {
    Canonical(RelationType),
    Inverse(String),
}

impl fmt::Display for RelationForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelationForm::Canonical(r) => f.write_str(r.as_str()),
            RelationForm::Inverse(s) => f.write_str(s),
        }
    }
}

/// A parsed triple before inverse normalization.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CandidateTriple {
    pub subject: Concept,
    pub relation: RelationForm,
    pub object: Concept,
}

impl From<&Triple> for CandidateTriple {
    fn from(t: &Triple) -> Self {
        Self {
            subject: t.subject().clone(),
            relation: RelationForm::Canonical(t.relation()),
            object: t.object().clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InverseTarget {
    pub relation: RelationType,
    pub swap_arguments: bool,
}

/// Inverse surface relation name → canonical relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InverseMap {
    pairs: BTreeMap<String, InverseTarget>,
}

impl Default for InverseMap {
    fn default() -> Self {
        use RelationType::*;
        Self::new(
            [
                ("treated-by", Treats),
                ("affected-by", Affects),
                ("used-by", Uses),
                ("has-result", ResultOf),
                ("contained-in", Contains),
                ("managed-by", Manages),
                ("disrupted-by", Disrupts),
                ("complicated-by", Complicates),
                ("prevented-by", Prevents),
                ("has-part", PartOf),
                ("has-subtype", IsA),
            ]
            .into_iter()
            .map(|(name, rel)| {
                (
                    name.to_string(),
                    InverseTarget {
                        relation: rel,
                        swap_arguments: true,
                    },
                )
            }),
        )
        .expect("default inverse map is valid")
    }
}

impl InverseMap {
    /// Keys are folded with [`relation_surface_key`]; a key that already
    /// names a canonical relation is rejected.
    pub fn new<I>(pairs: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (String, InverseTarget)>,
    {
        let mut map = BTreeMap::new();
        for (name, target) in pairs {
            let key = relation_surface_key(&name);
            if key.is_empty() || RelationType::ALL.iter().any(|r| r.as_str() == key) {
                return Err(ModelError::UnknownRelation(name));
            }
            map.insert(key, target);
        }
        Ok(Self { pairs: map })
    }

    pub fn lookup(&self, surface: &str) -> Option<(&str, InverseTarget)> {
        let key = relation_surface_key(surface);
        let key = match self.pairs.get_key_value(key.as_str()) {
            Some(hit) => Some(hit),
            None => key.strip_prefix("is-").and_then(|k| self.pairs.get_key_value(k)),
        };
        key.map(|(k, t)| (k.as_str(), *t))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, InverseTarget)> {
        self.pairs.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Inverse names whose canonical target is in `vocabulary`.
    pub fn forms_for<'a>(
        &'a self,
        vocabulary: &'a [RelationType],
    ) -> impl Iterator<Item = (&'a str, RelationType)> + 'a {
        self.iter()
            .filter(move |(_, t)| vocabulary.contains(&t.relation))
            .map(|(k, t)| (k, t.relation))
    }

    /// Resolves a raw relation: inverse forms first, then the canonical
    /// alias/typo table.
    pub fn resolve(&self, raw: &str) -> Result<RelationForm, ModelError> {
        if let Some((name, _)) = self.lookup(raw) {
            return Ok(RelationForm::Inverse(name.to_string()));
        }
        canonical_relation(raw).map(RelationForm::Canonical)
    }
}

/// Rewrites inverse relations to canonical ones, swapping arguments where the
/// map says so. Canonical triples pass through.
pub fn normalize_inverse(candidate: &CandidateTriple, map: &InverseMap) -> Result<Triple, ModelError> {
    let (relation, swap) = match &candidate.relation {
        RelationForm::Canonical(r) => (*r, false),
        RelationForm::Inverse(name) => {
            let (_, target) = map
                .lookup(name)
                .ok_or_else(|| ModelError::UnknownRelation(name.clone()))?;
            (target.relation, target.swap_arguments)
        }
    };
    let (s, o) = if swap {
        (candidate.object.clone(), candidate.subject.clone())
    } else {
        (candidate.subject.clone(), candidate.object.clone())
    };
    Triple::new(s, relation, o)
}
