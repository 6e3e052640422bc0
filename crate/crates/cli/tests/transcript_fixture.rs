//! The shipped transcript is produced by recording a scripted session through
//! the real pipeline. `regenerate` rewrites it; `fixture_is_current` checks
//! that a replay of it still reproduces the committed snapshot.

use std::path::{Path, PathBuf};

use ontogrow_core::llm::{RecordingBackend, ReplayBackend, ScriptedBackend};
use ontogrow_core::pipeline::{run_pipeline, InverseMap, PipelineConfig, PromptTemplates, Snapshot};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// (line, number of runs out of ten that mention it)
const CONCEPTS: &[(&str, usize)] = &[
    ("Cancer-related fatigue", 10),
    ("Physical exercise", 9),
    ("Yoga", 10),
    ("Mind-body intervention", 7),
    ("Sleep", 8),
    ("Quality of life", 8),
    ("Mindfulness-based stress reduction", 9),
    ("Meditation", 6),
    ("Stress", 7),
    ("Anxiety", 6),
    ("Acupuncture", 10),
    ("Chemotherapy", 6),
    ("Psychosocial intervention", 7),
    ("Cognitive behavioural therapy", 8),
    ("Distress", 7),
    ("Anaemia", 5),
    ("Breathing", 3),
    ("Rest", 2),
];

const TRIPLES: &[(&str, usize)] = &[
    ("yoga | is-a | mind-body intervention", 8),
    ("mindfulness-based stress reduction | is-a | meditation", 7),
    ("physical exercise | affects | cancer-related fatigue", 4),
    ("cancer-related fatigue | affected-by | physical exercise", 3),
    ("yoga | affects | sleep", 7),
    ("yoga | affects | quality of life", 6),
    ("mindfulness-based stress reduction | affects | stress", 9),
    ("mindfulness-based stress reduction | affects | anxiety", 6),
    ("acupuncture | treats | cancer-related fatigue", 5),
    ("cancer-related fatigue | treated-by | acupuncture", 4),
    ("cognitive behavioural therapy | is-a | psychosocial intervention", 8),
    ("psychosocial intervention | manages | distress", 6),
    ("sleep | complicates | cancer-related fatigue", 5),
    ("acupuncture | treats | chemotherapy", 2),
    ("yoga | heals | cancer-related fatigue", 3),
];

/// Run `i` mentions item `j` when `(i + j) mod 10 < count`, so each item
/// appears in exactly `count` runs and runs differ from one another.
fn responses(items: &[(&str, usize)], format: impl Fn(usize, &str) -> String, header: &str) -> Vec<String> {
    (0..10)
        .map(|i| {
            let mut lines = Vec::new();
            if i % 4 == 1 {
                lines.push(header.to_string());
            }
            for (j, (line, count)) in items.iter().enumerate() {
                if (i + j) % 10 < *count {
                    lines.push(format(i, line));
                }
            }
            lines.join("\n")
        })
        .collect()
}

fn script() -> Vec<String> {
    let mut all = responses(
        CONCEPTS,
        |i, c| match i % 3 {
            0 => format!("- {c}"),
            1 => format!("* {}", c.to_lowercase()),
            _ => format!("1. {c}"),
        },
        "Concepts:",
    );
    all.extend(responses(TRIPLES, |_, t| t.to_string(), "Here are the triples:"));
    all
}

fn extract(backend: &dyn ontogrow_core::llm::Backend) -> Snapshot {
    let context = std::fs::read_to_string(fixture("guideline_context.txt")).unwrap();
    let config = PipelineConfig::default();
    let out = run_pipeline(
        &context,
        &config,
        &PromptTemplates::default(),
        &InverseMap::default(),
        backend,
    )
    .unwrap();
    Snapshot::from_output(&out, &config)
}

#[test]
#[ignore = "rewrites fixtures/transcript.jsonl and fixtures/expected_snapshot.json"]
fn regenerate() {
    let recorder = RecordingBackend::create(ScriptedBackend::new(script()), fixture("transcript.jsonl")).unwrap();
    let snapshot = extract(&recorder);
    assert_eq!(recorder.transcript().len(), 20);
    std::fs::write(fixture("expected_snapshot.json"), snapshot.to_json()).unwrap();
}

#[test]
fn fixture_is_current() {
    let replay = ReplayBackend::from_file(&fixture("transcript.jsonl")).unwrap();
    let snapshot = extract(&replay);
    assert_eq!(replay.remaining(), 0);
    let expected = std::fs::read_to_string(fixture("expected_snapshot.json")).unwrap();
    assert_eq!(snapshot.to_json(), expected);
    let scripted = extract(&ScriptedBackend::new(script()));
    assert_eq!(scripted.to_json(), expected);
}
