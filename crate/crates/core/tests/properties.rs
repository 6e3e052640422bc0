use std::collections::{BTreeMap, BTreeSet};

use ontogrow_core::evaluation::{
    classify, match_triples, precision, recall, stratified_report, Decision, GoldEntry, Resolutions, SynonymMap,
};
use ontogrow_core::export::{to_owl_xml, OntologyFragment, DEFAULT_BASE_IRI};
use ontogrow_core::model::{Concept, DifficultyLevel, RelationType, Triple};
use ontogrow_core::pipeline::{consensus_vote, normalize_inverse, CandidateTriple, InverseMap, RelationForm};
use ontogrow_core::terminology::Lexicon;
use proptest::prelude::*;

const LABELS: [&str; 8] = [
    "yoga",
    "fatigue",
    "sleep",
    "stress",
    "acupuncture",
    "tai chi",
    "anxiety",
    "exercise",
];

fn brute_force(runs: &[Vec<u32>], k: usize) -> BTreeMap<u32, usize> {
    let mut out = BTreeMap::new();
    for item in runs.iter().flatten().copied().collect::<BTreeSet<_>>() {
        let n = runs.iter().filter(|r| r.contains(&item)).count();
        if n >= k {
            out.insert(item, n);
        }
    }
    out
}

fn runs_strategy() -> impl Strategy<Value = (Vec<Vec<u32>>, usize)> {
    (1usize..=20).prop_flat_map(|n| (prop::collection::vec(prop::collection::vec(0u32..15, 0..10), n), 1..=n))
}

fn triple_strategy() -> impl Strategy<Value = Triple> {
    (0..LABELS.len(), 0..RelationType::ALL.len(), 0..LABELS.len())
        .prop_filter("no self loops", |(s, _, o)| s != o)
        .prop_map(|(s, r, o)| Triple::parse(LABELS[s], RelationType::ALL[r].as_str(), LABELS[o]).unwrap())
}

fn lexicon() -> Lexicon {
    Lexicon::from_labels(["yoga", "fatigue", "sleep", "stress"])
}

proptest! {
    #[test]
    fn consensus_matches_recount((runs, k) in runs_strategy()) {
        let got: BTreeMap<u32, usize> = consensus_vote(&runs, k).unwrap().into_iter().map(|v| (v.item, v.votes)).collect();
        prop_assert_eq!(got, brute_force(&runs, k));
    }

    #[test]
    fn consensus_threshold_is_monotone((runs, k) in runs_strategy()) {
        prop_assume!(k < runs.len());
        let loose: BTreeSet<u32> = consensus_vote(&runs, k).unwrap().into_iter().map(|v| v.item).collect();
        let strict: BTreeSet<u32> = consensus_vote(&runs, k + 1).unwrap().into_iter().map(|v| v.item).collect();
        prop_assert!(strict.is_subset(&loose));
    }

    #[test]
    fn consensus_ignores_run_order((runs, k) in runs_strategy(), seed in any::<u64>()) {
        let mut shuffled = runs.clone();
        let len = shuffled.len();
        for i in (1..len).rev() {
            shuffled.swap(i, (seed.rotate_left(i as u32) as usize) % (i + 1));
        }
        prop_assert_eq!(consensus_vote(&runs, k).unwrap(), consensus_vote(&shuffled, k).unwrap());
    }

    #[test]
    fn report_partition_and_micro_consistency(
        gold in prop::collection::btree_set(triple_strategy(), 0..12),
        extracted in prop::collection::btree_set(triple_strategy(), 0..12),
        accept_mask in any::<u64>(),
    ) {
        let lex = lexicon();
        let gold: Vec<GoldEntry> = gold.into_iter().map(|t| GoldEntry {
            level: classify(&t, &lex).unwrap(),
            triple: t,
            found_by_model: false,
        }).collect();
        let extracted: Vec<Triple> = extracted.into_iter().collect();
        let syn = SynonymMap::default();
        let m = match_triples(&extracted, &gold, &syn);

        prop_assert_eq!(m.true_positives.len() + m.false_negatives.len(), gold.len());
        let gold_set: BTreeSet<&Triple> = gold.iter().map(|g| &g.triple).collect();
        prop_assert!(m.fp_candidates.iter().all(|t| !gold_set.contains(t)));
        prop_assert_eq!(m.true_positives.len() + m.fp_candidates.len(), extracted.len());

        let res: Resolutions = m.fp_candidates.iter().enumerate().map(|(i, t)| {
            (t.id(), if accept_mask >> (i % 64) & 1 == 1 { Decision::Accept } else { Decision::Decline })
        }).collect();
        let r = stratified_report(&m, &res, &lex, &syn, None).unwrap();
        let tp: usize = r.per_level.iter().map(|x| x.counts.tp).sum();
        let fn_: usize = r.per_level.iter().map(|x| x.counts.fn_).sum();
        let fp: usize = r.per_level.iter().map(|x| x.counts.fp).sum();
        prop_assert_eq!((tp, fn_, fp), (r.overall.tp, r.overall.fn_, r.overall.fp));
        prop_assert_eq!(r.overall.precision, precision(tp, fp));
        prop_assert_eq!(r.overall.recall, recall(tp, fn_));
        for row in r.per_level.iter().map(|x| &x.counts).chain([&r.overall, &r.concepts]) {
            for v in [row.precision, row.recall].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        let mut rev_extracted = extracted.clone();
        rev_extracted.reverse();
        let mut rev_gold = gold.clone();
        rev_gold.reverse();
        let m2 = match_triples(&rev_extracted, &rev_gold, &syn);
        prop_assert_eq!(stratified_report(&m2, &res, &lex, &syn, None).unwrap(), r);
    }

    #[test]
    fn matching_ignores_label_case_and_spacing(triples in prop::collection::btree_set(triple_strategy(), 1..8)) {
        let gold: Vec<GoldEntry> = triples.iter().map(|t| GoldEntry {
            triple: t.clone(),
            level: DifficultyLevel::Three,
            found_by_model: false,
        }).collect();
        let shouty: Vec<Triple> = triples.iter().map(|t| Triple::parse(
            &format!("  {} ", t.subject().label().to_uppercase()),
            t.relation().as_str(),
            &t.object().label().replace(' ', "   "),
        ).unwrap()).collect();
        let m = match_triples(&shouty, &gold, &SynonymMap::default());
        prop_assert!(m.false_negatives.is_empty());
        prop_assert!(m.fp_candidates.is_empty());
    }

    #[test]
    fn owl_round_trip(triples in prop::collection::btree_set(triple_strategy(), 0..16)) {
        let fragment = OntologyFragment::from_triples(triples.iter().cloned(), DEFAULT_BASE_IRI);
        let xml = to_owl_xml(&fragment).unwrap();
        prop_assert_eq!(&xml, &to_owl_xml(&fragment).unwrap());
        let (back, plain, restrictions) = parse_owl(&xml);
        prop_assert_eq!(&back, &triples);
        prop_assert_eq!(plain, triples.iter().filter(|t| t.relation().is_a()).count());
        prop_assert_eq!(restrictions, triples.iter().filter(|t| !t.relation().is_a()).count());
    }

    #[test]
    fn inverse_normalization_is_idempotent(s in 0..LABELS.len(), o in 0..LABELS.len()) {
        prop_assume!(s != o);
        let map = InverseMap::default();
        for (name, target) in map.iter() {
            let candidate = CandidateTriple {
                subject: Concept::new(LABELS[s]).unwrap(),
                relation: RelationForm::Inverse(name.to_string()),
                object: Concept::new(LABELS[o]).unwrap(),
            };
            let once = normalize_inverse(&candidate, &map).unwrap();
            prop_assert_eq!(once.relation(), target.relation);
            let twice = normalize_inverse(&CandidateTriple::from(&once), &map).unwrap();
            prop_assert_eq!(&twice, &once);
        }
    }
}

/// Reads (subject, relation, object) back out of the RDF/XML, independently
/// of the exporter. Returns the triples and the plain/restriction axiom counts.
fn parse_owl(xml: &str) -> (BTreeSet<Triple>, usize, usize) {
    const RDF: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
    const RDFS: &str = "http://www.w3.org/2000/01/rdf-schema#";
    const OWL: &str = "http://www.w3.org/2002/07/owl#";
    let doc = roxmltree::Document::parse(xml).expect("well-formed XML");
    let label_of = |n: roxmltree::Node| {
        n.children()
            .find(|c| c.has_tag_name((RDFS, "label")))
            .and_then(|c| c.text())
            .unwrap()
            .to_string()
    };
    let mut classes = BTreeMap::new();
    let mut properties = BTreeMap::new();
    for n in doc.root_element().children().filter(|n| n.is_element()) {
        let about = n.attribute((RDF, "about")).unwrap().to_string();
        if n.has_tag_name((OWL, "Class")) {
            classes.insert(about, label_of(n));
        } else if n.has_tag_name((OWL, "ObjectProperty")) {
            properties.insert(about, label_of(n));
        }
    }
    let (mut out, mut plain, mut restrictions) = (BTreeSet::new(), 0, 0);
    for n in doc.root_element().children().filter(|n| n.has_tag_name((OWL, "Class"))) {
        let subject = &classes[n.attribute((RDF, "about")).unwrap()];
        for sub in n.children().filter(|c| c.has_tag_name((RDFS, "subClassOf"))) {
            if let Some(parent) = sub.attribute((RDF, "resource")) {
                plain += 1;
                out.insert(Triple::parse(subject, "is-a", &classes[parent]).unwrap());
            } else {
                let r = sub.children().find(|c| c.has_tag_name((OWL, "Restriction"))).unwrap();
                let attr = |tag| {
                    r.children()
                        .find(|c| c.has_tag_name((OWL, tag)))
                        .and_then(|c| c.attribute((RDF, "resource")))
                        .unwrap()
                };
                restrictions += 1;
                out.insert(
                    Triple::parse(
                        subject,
                        &properties[attr("onProperty")],
                        &classes[attr("someValuesFrom")],
                    )
                    .unwrap(),
                );
            }
        }
    }
    (out, plain, restrictions)
}
