//! SNOMED-CT membership lookups, from a local lexicon file or a remote
//! term-search endpoint.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::model::{normalize_label, Concept, SnomedStatus};

#[derive(Debug, Error)]
pub enum TerminologyError {
    #[error("cannot load lexicon {path}: {source}")]
    Load { path: String, source: std::io::Error },
    #[error("terminology client setup failed: {0}")]
    Client(String),
}

/// Anything that can say whether a label is in SNOMED-CT.
pub trait MembershipOracle: Send + Sync {
    fn status_of(&self, normalized_label: &str) -> SnomedStatus;

    fn status(&self, concept: &Concept) -> SnomedStatus {
        self.status_of(concept.normalized())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LexiconSource {
    LocalFile,
    InMemory,
}

/// Immutable set of normalized SNOMED-CT labels, each with an optional code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    entries: BTreeMap<String, Option<String>>,
    pub source: LexiconSource,
}

impl Lexicon {
    pub fn from_labels<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            entries: labels
                .into_iter()
                .filter_map(|l| normalize_label(l.as_ref()).ok())
                .map(|l| (l, None))
                .collect(),
            source: LexiconSource::InMemory,
        }
    }

    /// Parses `label[TAB code]` lines; `#` starts a comment line. Blank
    /// labels are skipped with a warning.
    pub fn parse(text: &str) -> Self {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let label = fields.next().unwrap_or_default();
            let code = fields
                .next()
                .map(str::trim)
                .filter(|c| !c.is_empty())
                .map(str::to_string);
            if fields.next().is_some() {
                tracing::warn!(line = i + 1, "lexicon line has more than two fields; skipped");
                continue;
            }
            match normalize_label(label) {
                Ok(l) => {
                    let slot = entries.entry(l).or_insert(None);
                    if slot.is_none() {
                        *slot = code;
                    }
                }
                Err(_) => tracing::warn!(line = i + 1, "lexicon line has an empty label; skipped"),
            }
        }
        Self {
            entries,
            source: LexiconSource::LocalFile,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn code(&self, concept: &Concept) -> Option<&str> {
        self.entries.get(concept.normalized()).and_then(|c| c.as_deref())
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

pub fn load_lexicon(path: &Path) -> Result<Lexicon, TerminologyError> {
    let text = std::fs::read_to_string(path).map_err(|source| TerminologyError::Load {
        path: path.display().to_string(),
        source,
    })?;
    Ok(Lexicon::parse(&text))
}

impl MembershipOracle for Lexicon {
    fn status_of(&self, normalized_label: &str) -> SnomedStatus {
        let key = normalize_label(normalized_label).unwrap_or_default();
        if self.entries.contains_key(&key) {
            SnomedStatus::InSnomed
        } else {
            SnomedStatus::NotInSnomed
        }
    }
}

pub fn in_snomed(concept: &Concept, oracle: &dyn MembershipOracle) -> SnomedStatus {
    oracle.status(concept)
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub base_url: String,
    /// Path of the term-search endpoint, e.g. `/browser/MAIN/descriptions`.
    pub search_path: String,
    pub api_key: Option<String>,
}

#[derive(Deserialize)]
struct SearchResponse {
    #[serde(default)]
    items: Vec<SearchItem>,
}

#[derive(Deserialize)]
struct SearchItem {
    term: String,
}

/// Term-search client for a terminology server returning
/// `{"items": [{"term": ...}, ...]}`. A concept counts as present when any
/// returned term normalizes to the query label. Transport or format failures
/// yield `Unknown`.
pub struct RemoteTerminology {
    client: reqwest::blocking::Client,
    config: RemoteConfig,
}

impl RemoteTerminology {
    pub fn new(config: RemoteConfig) -> Result<Self, TerminologyError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(20))
            .build()
            .map_err(|e| TerminologyError::Client(e.to_string()))?;
        Ok(Self { client, config })
    }

    fn search(&self, term: &str) -> Result<Vec<String>, String> {
        let url = format!(
            "{}/{}",
            self.config.base_url.trim_end_matches('/'),
            self.config.search_path.trim_start_matches('/')
        );
        let mut req = self.client.get(url).query(&[("term", term)]);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            return Err(format!("HTTP {}", resp.status()));
        }
        let body: SearchResponse = resp.json().map_err(|e| e.to_string())?;
        Ok(body.items.into_iter().map(|i| i.term).collect())
    }
}

impl MembershipOracle for RemoteTerminology {
    fn status_of(&self, normalized_label: &str) -> SnomedStatus {
        match self.search(normalized_label) {
            Ok(terms) => {
                let hit = terms
                    .iter()
                    .filter_map(|t| normalize_label(t).ok())
                    .any(|t| t == normalized_label);
                if hit {
                    SnomedStatus::InSnomed
                } else {
                    SnomedStatus::NotInSnomed
                }
            }
            Err(e) => {
                tracing::warn!(label = normalized_label, error = %e, "terminology lookup failed");
                SnomedStatus::Unknown
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Write};
    use std::net::TcpListener;

    fn fixture() -> Lexicon {
        load_lexicon(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/snomed_lexicon.tsv")).unwrap()
    }

    #[test]
    fn fixture_memberships() {
        let lex = fixture();
        assert_eq!(
            in_snomed(&Concept::new("fatigue").unwrap(), &lex),
            SnomedStatus::InSnomed
        );
        assert_eq!(
            in_snomed(&Concept::new("Fatigue ").unwrap(), &lex),
            SnomedStatus::InSnomed
        );
        assert_eq!(
            in_snomed(&Concept::new("cognitive appraisal of crf").unwrap(), &lex),
            SnomedStatus::NotInSnomed
        );
    }

    #[test]
    fn empty_lexicon_has_nothing() {
        let lex = Lexicon::parse("");
        assert!(lex.is_empty());
        assert_eq!(lex.status(&Concept::new("yoga").unwrap()), SnomedStatus::NotInSnomed);
    }

    #[test]
    fn dedup_and_codes() {
        let lex = Lexicon::parse("Fatigue\nfatigue\t84229001\n  \nyoga\t\n# comment\nbad\tline\tthree\n");
        assert_eq!(lex.len(), 2);
        assert_eq!(lex.code(&Concept::new("fatigue").unwrap()), Some("84229001"));
        assert_eq!(lex.code(&Concept::new("yoga").unwrap()), None);
    }

    #[test]
    fn unreadable_file_is_load_error() {
        assert!(matches!(
            load_lexicon(Path::new("/nonexistent/lexicon.tsv")),
            Err(TerminologyError::Load { .. })
        ));
    }

    fn serve_once(status: u16, body: &'static str) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        });
        format!("http://{addr}")
    }

    fn remote(base_url: String) -> RemoteTerminology {
        RemoteTerminology::new(RemoteConfig {
            base_url,
            search_path: "/descriptions".into(),
            api_key: None,
        })
        .unwrap()
    }

    #[test]
    fn remote_hit_and_miss() {
        let url = serve_once(200, r#"{"items":[{"term":"Fatigue"},{"term":"Chronic fatigue"}]}"#);
        assert_eq!(remote(url).status_of("fatigue"), SnomedStatus::InSnomed);
        let url = serve_once(200, r#"{"items":[{"term":"Yoga therapy"}]}"#);
        assert_eq!(remote(url).status_of("yoga"), SnomedStatus::NotInSnomed);
    }

    #[test]
    fn remote_failure_is_unknown() {
        let url = serve_once(503, "{}");
        assert_eq!(remote(url).status_of("fatigue"), SnomedStatus::Unknown);
        // nothing listening
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        drop(listener);
        assert_eq!(remote(url).status_of("fatigue"), SnomedStatus::Unknown);
    }
}
