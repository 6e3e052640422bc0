//! Completion backends: a live chat-completion client, a transcript recorder
//! and a deterministic replayer.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_TEMPERATURE: f64 = 1.0;
pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request rejected with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("replay transcript exhausted after {consumed} entries")]
    ReplayExhausted { consumed: usize },
    #[error("replay mismatch at entry {index}: expected fingerprint {expected}, got {got}")]
    ReplayMismatch {
        index: usize,
        expected: String,
        got: String,
    },
    #[error("transcript parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LlmError {
    /// Only transport failures are worth a retry or may be absorbed as a
    /// failed run; everything else is a configuration problem.
    pub fn is_transient(&self) -> bool {
        matches!(self, LlmError::Transport(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub system_message: String,
    pub user_message: String,
    pub temperature: f64,
    pub model_id: String,
}

impl PromptRequest {
    pub fn new(system_message: impl Into<String>, user_message: impl Into<String>) -> Self {
        Self {
            system_message: system_message.into(),
            user_message: user_message.into(),
            temperature: DEFAULT_TEMPERATURE,
            model_id: DEFAULT_MODEL.to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Content hash over every field that changes the model's behaviour.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::json!([
            self.system_message,
            self.user_message,
            format!("{:.2}", self.temperature),
            self.model_id,
        ]);
        hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
    }
}

/// A source of completions. Implementations must be callable from several
/// extraction runs at once.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &PromptRequest) -> Result<String, LlmError>;

    /// Whether runs may be issued concurrently without changing results.
    fn supports_concurrency(&self) -> bool {
        false
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, request: &PromptRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }

    fn supports_concurrency(&self) -> bool {
        (**self).supports_concurrency()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub fingerprint: String,
    pub response: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| {
                let mut line = serde_json::to_string(e).expect("transcript entry serializes");
                line.push('\n');
                line
            })
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LlmError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(line).map_err(|e| LlmError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.push(entry);
        }
        Ok(Self { entries })
    }
}

pub fn record_transcript(transcript: &Transcript, path: &Path) -> Result<(), LlmError> {
    std::fs::write(path, transcript.to_jsonl())?;
    Ok(())
}

pub fn load_transcript(path: &Path) -> Result<Transcript, LlmError> {
    Transcript::from_jsonl(&std::fs::read_to_string(path)?)
}

/// Hands out recorded responses in order, checking each request's fingerprint.
pub struct ReplayBackend {
    entries: Vec<TranscriptEntry>,
    cursor: Mutex<usize>,
}

impl ReplayBackend {
    pub fn new(transcript: Transcript) -> Self {
        Self {
            entries: transcript.entries,
            cursor: Mutex::new(0),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        Ok(Self::new(load_transcript(path)?))
    }

    pub fn remaining(&self) -> usize {
        self.entries.len() - *self.cursor.lock().expect("replay cursor poisoned")
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, request: &PromptRequest) -> Result<String, LlmError> {
        let mut cursor = self.cursor.lock().expect("replay cursor poisoned");
        let entry = self
            .entries
            .get(*cursor)
            .ok_or(LlmError::ReplayExhausted { consumed: *cursor })?;
        let got = request.fingerprint();
        if entry.fingerprint != got {
            return Err(LlmError::ReplayMismatch {
                index: *cursor,
                expected: entry.fingerprint.clone(),
                got,
            });
        }
        *cursor += 1;
        Ok(entry.response.clone())
    }
}

/// Wraps another backend and appends every successful exchange to a JSONL file.
pub struct RecordingBackend<B> {
    inner: B,
    sink: Mutex<(BufWriter<File>, Transcript)>,
    path: PathBuf,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn create(inner: B, path: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let path = path.into();
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(&path)?;
        Ok(Self {
            inner,
            sink: Mutex::new((BufWriter::new(file), Transcript::default())),
            path,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn transcript(&self) -> Transcript {
        self.sink.lock().expect("recorder poisoned").1.clone()
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn complete(&self, request: &PromptRequest) -> Result<String, LlmError> {
        let response = self.inner.complete(request)?;
        let entry = TranscriptEntry {
            fingerprint: request.fingerprint(),
            response: response.clone(),
        };
        let mut sink = self.sink.lock().expect("recorder poisoned");
        let line = serde_json::to_string(&entry).expect("transcript entry serializes");
        writeln!(sink.0, "{line}")?;
        sink.0.flush()?;
        sink.1.entries.push(entry);
        Ok(response)
    }

    // Recording keeps the transcript in request order, so runs stay sequential.
}

/// Returns canned responses in order. Used to script sessions for tests and
/// to seed transcripts.
pub struct ScriptedBackend {
    responses: Vec<String>,
    cursor: Mutex<usize>,
}

impl ScriptedBackend {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            responses: responses.into_iter().map(Into::into).collect(),
            cursor: Mutex::new(0),
        }
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, _request: &PromptRequest) -> Result<String, LlmError> {
        let mut cursor = self.cursor.lock().expect("script cursor poisoned");
        let response = self
            .responses
            .get(*cursor)
            .cloned()
            .ok_or(LlmError::ReplayExhausted { consumed: *cursor })?;
        *cursor += 1;
        Ok(response)
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: Vec<ChatMessage<'a>>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: Option<String>,
}

/// OpenAI-style chat-completion client over HTTP(S).
pub struct LiveBackend {
    client: reqwest::blocking::Client,
    endpoint_url: String,
    api_key: Option<String>,
    attempts: u32,
    backoff: Duration,
}

impl LiveBackend {
    pub fn new(endpoint_url: impl Into<String>, api_key: Option<String>) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            endpoint_url: endpoint_url.into(),
            api_key,
            attempts: 2,
            backoff: Duration::from_millis(500),
        })
    }

    /// Base delay before the retry; doubles per further attempt.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn attempt(&self, request: &PromptRequest) -> Result<String, LlmError> {
        let mut messages = Vec::with_capacity(2);
        if !request.system_message.is_empty() {
            messages.push(ChatMessage {
                role: "system",
                content: &request.system_message,
            });
        }
        messages.push(ChatMessage {
            role: "user",
            content: &request.user_message,
        });
        let body = ChatRequest {
            model: &request.model_id,
            temperature: request.temperature,
            messages,
        };
        let mut http = self.client.post(&self.endpoint_url).json(&body);
        if let Some(key) = &self.api_key {
            http = http.bearer_auth(key);
        }
        let response = http.send().map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = response.status();
        if status.is_client_error() && !matches!(status.as_u16(), 408 | 429) {
            let body = response.text().unwrap_or_default();
            return Err(LlmError::Rejected {
                status: status.as_u16(),
                body,
            });
        }
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(LlmError::Transport(format!("HTTP {status}: {text}")));
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| LlmError::Transport(format!("malformed completion body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Transport("completion has no choices".into()))
    }
}

impl Backend for LiveBackend {
    fn complete(&self, request: &PromptRequest) -> Result<String, LlmError> {
        request.validate()?;
        let mut delay = self.backoff;
        let mut last = None;
        for attempt in 0..self.attempts {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(request) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_transient() => {
                    tracing::warn!(attempt = attempt + 1, error = %e, "completion attempt failed");
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap_or_else(|| LlmError::Transport("no attempts made".into())))
    }

    fn supports_concurrency(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            other => Err(format!("unknown mode `{other}` (expected live, record or replay)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub mode: Mode,
    pub endpoint_url: Option<String>,
    pub api_key: Option<String>,
    pub transcript_path: Option<PathBuf>,
}

/// Builds the backend a configuration asks for.
pub fn build_backend(config: &GatewayConfig) -> Result<Box<dyn Backend>, LlmError> {
    let live = || -> Result<LiveBackend, LlmError> {
        let url = config
            .endpoint_url
            .clone()
            .ok_or_else(|| LlmError::InvalidRequest("endpoint_url is required for live calls".into()))?;
        LiveBackend::new(url, config.api_key.clone())
    };
    let transcript = || {
        config
            .transcript_path
            .clone()
            .ok_or_else(|| LlmError::InvalidRequest("transcript_path is required".into()))
    };
    Ok(match config.mode {
        Mode::Live => Box::new(live()?),
        Mode::Record => Box::new(RecordingBackend::create(live()?, transcript()?)?),
        Mode::Replay => Box::new(ReplayBackend::from_file(&transcript()?)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read};
    use std::net::TcpListener;
    use std::thread;

    fn entry(fp: &str, response: &str) -> TranscriptEntry {
        TranscriptEntry {
            fingerprint: fp.into(),
            response: response.into(),
        }
    }

    #[test]
    fn replay_returns_matching_entry_then_exhausts() {
        let req = PromptRequest::new("sys", "list concepts");
        let backend = ReplayBackend::new(Transcript {
            entries: vec![entry(&req.fingerprint(), "- yoga")],
        });
        assert_eq!(backend.complete(&req).unwrap(), "- yoga");
        assert!(matches!(
            backend.complete(&req),
            Err(LlmError::ReplayExhausted { consumed: 1 })
        ));
    }

    #[test]
    fn replay_mismatch_is_loud() {
        let req = PromptRequest::new("sys", "a");
        let backend = ReplayBackend::new(Transcript {
            entries: vec![entry("deadbeef", "x")],
        });
        match backend.complete(&req) {
            Err(LlmError::ReplayMismatch { index, expected, got }) => {
                assert_eq!(index, 0);
                assert_eq!(expected, "deadbeef");
                assert_eq!(got, req.fingerprint());
            }
            other => panic!("expected mismatch, got {other:?}"),
        }
        // A mismatch does not consume the entry.
        assert_eq!(backend.remaining(), 1);
    }

    #[test]
    fn fingerprint_covers_every_field() {
        let base = PromptRequest::new("s", "u");
        let mut variants = vec![base.clone(); 4];
        variants[0].system_message.push('!');
        variants[1].user_message.push('!');
        variants[2].temperature = 0.7;
        variants[3].model_id = "other".into();
        for v in variants {
            assert_ne!(v.fingerprint(), base.fingerprint());
        }
        assert_eq!(base.fingerprint(), PromptRequest::new("s", "u").fingerprint());
    }

    #[test]
    fn temperature_bounds() {
        let mut req = PromptRequest::new("", "u");
        assert_eq!(req.temperature, 1.0);
        req.temperature = 2.5;
        assert!(req.validate().is_err());
        req.temperature = 0.0;
        assert!(req.validate().is_ok());
    }

    #[test]
    fn empty_transcript_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        record_transcript(&Transcript::default(), &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
        assert!(load_transcript(&path).unwrap().is_empty());
    }

    #[test]
    fn truncated_final_line_reports_line_number() {
        let text = "{\"fingerprint\":\"a\",\"response\":\"x\"}\n{\"fingerprint\":\"b\",\"resp";
        match Transcript::from_jsonl(text) {
            Err(LlmError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn recorder_appends_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.jsonl");
        let rec = RecordingBackend::create(ScriptedBackend::new(["one", "two"]), &path).unwrap();
        let a = PromptRequest::new("s", "a");
        let b = PromptRequest::new("s", "b");
        rec.complete(&a).unwrap();
        rec.complete(&b).unwrap();
        let loaded = load_transcript(&path).unwrap();
        assert_eq!(loaded, rec.transcript());
        let replay = ReplayBackend::new(loaded);
        assert_eq!(replay.complete(&a).unwrap(), "one");
        assert_eq!(replay.complete(&b).unwrap(), "two");
    }

    /// Minimal one-shot HTTP server; returns the URL and a handle yielding the
    /// raw request body it saw.
    fn stub_server(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut content_length = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        content_length = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; content_length];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (url, handle)
    }

    fn completion_body(text: &str) -> String {
        serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
    }

    #[test]
    fn live_backend_passes_body_through() {
        let (url, server) = stub_server(vec![(200, completion_body("yoga | treats | fatigue"))]);
        let backend = LiveBackend::new(url, Some("k".into())).unwrap();
        let req = PromptRequest::new("system text", "user text");
        assert_eq!(backend.complete(&req).unwrap(), "yoga | treats | fatigue");
        let bodies = server.join().unwrap();
        let sent: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(sent["model"], DEFAULT_MODEL);
        assert_eq!(sent["temperature"], 1.0);
        assert_eq!(sent["messages"][0]["role"], "system");
        assert_eq!(sent["messages"][1]["content"], "user text");
    }

    #[test]
    fn live_backend_retries_once_then_fails() {
        let (url, server) = stub_server(vec![(503, "{}".into()), (200, completion_body("recovered"))]);
        let backend = LiveBackend::new(url, None)
            .unwrap()
            .with_backoff(Duration::from_millis(1));
        assert_eq!(backend.complete(&PromptRequest::new("", "u")).unwrap(), "recovered");
        server.join().unwrap();

        let (url, server) = stub_server(vec![(500, "{}".into()), (429, "{}".into())]);
        let backend = LiveBackend::new(url, None)
            .unwrap()
            .with_backoff(Duration::from_millis(1));
        let err = backend.complete(&PromptRequest::new("", "u")).unwrap_err();
        assert!(err.is_transient(), "{err}");
        assert!(err.to_string().contains("429"));
        server.join().unwrap();
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, server) = stub_server(vec![(401, r#"{"error":"bad key"}"#.into())]);
        let backend = LiveBackend::new(url, Some("wrong".into()))
            .unwrap()
            .with_backoff(Duration::from_millis(1));
        let err = backend.complete(&PromptRequest::new("", "u")).unwrap_err();
        assert!(matches!(err, LlmError::Rejected { status: 401, .. }), "{err}");
        assert!(!err.is_transient());
        assert_eq!(server.join().unwrap().len(), 1);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn transcript_round_trips(entries in proptest::collection::vec(("[0-9a-f]{8,64}", "[ -~\\n\\t]{0,80}"), 0..12)) {
                let t = Transcript {
                    entries: entries
                        .into_iter()
                        .map(|(fingerprint, response)| TranscriptEntry { fingerprint, response })
                        .collect(),
                };
                let text = t.to_jsonl();
                let back = Transcript::from_jsonl(&text).unwrap();
                prop_assert_eq!(&back, &t);
                prop_assert_eq!(back.to_jsonl(), text);
            }
        }
    }
}
