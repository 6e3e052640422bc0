//! Layered settings: built-in defaults < config file < `ONTOGROW_*` env vars
//! < command-line flags. The API key is read from the environment only.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const ENV_PREFIX: &str = "ONTOGROW_";
pub const API_KEY_ENV: &str = "ONTOGROW_API_KEY";

pub const KEYS: &[&str] = &[
    "base_iri",
    "concept_template",
    "context",
    "endpoint_url",
    "gold",
    "include_inverses",
    "lexicon",
    "listen",
    "mode",
    "model_id",
    "n_runs",
    "relations",
    "required_verdicts",
    "snapshot",
    "source_section",
    "synonyms",
    "temperature",
    "terminology_search_path",
    "terminology_url",
    "transcript",
    "triple_template",
    "ui_dir",
    "verdict_log",
    "vote_threshold",
];

/// Bad invocation or missing input; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

#[derive(Debug, Clone, Default)]
pub struct CliConfig {
    values: BTreeMap<String, String>,
    origin: BTreeMap<String, &'static str>,
    api_key: Option<String>,
}

/// `key = value` lines; `#` starts a comment line.
pub fn parse_file(text: &str) -> anyhow::Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(usage(format!("config line {}: expected `key = value`", i + 1)));
        };
        let key = key.trim().to_ascii_lowercase();
        if key == "api_key" {
            return Err(usage(format!(
                "config line {}: the API key is only read from {API_KEY_ENV}",
                i + 1
            )));
        }
        if !KEYS.contains(&key.as_str()) {
            return Err(usage(format!("config line {}: unknown key `{key}`", i + 1)));
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

impl CliConfig {
    pub fn resolve(
        file: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        flags: BTreeMap<&'static str, String>,
    ) -> anyhow::Result<Self> {
        let mut config = Self::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            for (k, v) in parse_file(&text)? {
                config.set(k, v, "file");
            }
        }
        for (name, value) in env {
            if name == API_KEY_ENV {
                config.api_key = Some(value).filter(|v| !v.is_empty());
                continue;
            }
            let Some(key) = name.strip_prefix(ENV_PREFIX).map(str::to_ascii_lowercase) else {
                continue;
            };
            if KEYS.contains(&key.as_str()) {
                config.set(key, value, "env");
            }
        }
        for (k, v) in flags {
            config.set(k.to_string(), v, "flag");
        }
        Ok(config)
    }

    fn set(&mut self, key: String, value: String, origin: &'static str) {
        self.origin.insert(key.clone(), origin);
        self.values.insert(key, value);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    pub fn require_path(&self, key: &str) -> anyhow::Result<PathBuf> {
        self.path(key).ok_or_else(|| {
            usage(format!(
                "missing `{key}`: pass --{} or set it in the config file or {ENV_PREFIX}{}",
                key.replace('_', "-"),
                key.to_ascii_uppercase()
            ))
        })
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> anyhow::Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| usage(format!("invalid `{key}` value `{v}`: {e}")))
            })
            .transpose()
    }

    pub fn api_key(&self) -> Option<String> {
        self.api_key.clone()
    }

    /// One line per setting, with its origin; the API key is redacted.
    pub fn describe(&self) -> String {
        let mut parts: Vec<String> = self
            .values
            .iter()
            .map(|(k, v)| format!("{k}={v} ({})", self.origin[k]))
            .collect();
        parts.push(format!(
            "api_key={}",
            if self.api_key.is_some() {
                "<redacted> (env)"
            } else {
                "<unset>"
            }
        ));
        parts.join(", ")
    }
}
