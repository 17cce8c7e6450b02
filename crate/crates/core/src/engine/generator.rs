use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::monitor::{MonitorError, TokenProbSequence};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationRequest {
    pub context: String,
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub text: String,
    pub tokens: TokenProbSequence,
}

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("scripted playbook exhausted after {0} entries")]
    Exhausted(usize),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("bad playbook entry {index}: {source}")]
    Playbook { index: usize, source: MonitorError },
    #[error("cannot read playbook {path}: {reason}")]
    Load { path: String, reason: String },
}

/// The single side-effecting boundary of a session.
pub trait ActionGenerator {
    fn generate(&mut self, request: &GenerationRequest) -> Result<Generation, GeneratorError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaybookEntry {
    pub text: String,
    /// Per-token probabilities reported with the text.
    pub probs: Vec<f64>,
}

impl PlaybookEntry {
    pub fn new(text: impl Into<String>, probs: Vec<f64>) -> Self {
        Self { text: text.into(), probs }
    }
}

/// Replays a fixed list of generations in order, ignoring the context.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedGenerator {
    entries: Vec<PlaybookEntry>,
    cursor: usize,
}

impl ScriptedGenerator {
    pub fn new(entries: Vec<PlaybookEntry>) -> Result<Self, GeneratorError> {
        for (index, e) in entries.iter().enumerate() {
            TokenProbSequence::from_probs(&e.probs).map_err(|source| GeneratorError::Playbook { index, source })?;
        }
        Ok(Self { entries, cursor: 0 })
    }

    /// Accepts either a JSON array of entries or `{"entries": [...]}`.
    pub fn load(path: &Path) -> Result<Self, GeneratorError> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum File {
            List(Vec<PlaybookEntry>),
            Wrapped { entries: Vec<PlaybookEntry> },
        }
        let load_err = |reason: String| GeneratorError::Load { path: path.display().to_string(), reason };
        let text = fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
        let entries = match serde_json::from_str(&text).map_err(|e| load_err(e.to_string()))? {
            File::List(v) | File::Wrapped { entries: v } => v,
        };
        Self::new(entries)
    }

    pub fn entries(&self) -> &[PlaybookEntry] {
        &self.entries
    }

    /// A fresh copy positioned at the first entry.
    pub fn rewound(&self) -> Self {
        Self { entries: self.entries.clone(), cursor: 0 }
    }
}

impl ActionGenerator for ScriptedGenerator {
    fn generate(&mut self, _request: &GenerationRequest) -> Result<Generation, GeneratorError> {
        let entry = self.entries.get(self.cursor).ok_or(GeneratorError::Exhausted(self.entries.len()))?;
        self.cursor += 1;
        let tokens = TokenProbSequence::from_probs(&entry.probs).expect("validated on construction");
        Ok(Generation { text: entry.text.clone(), tokens })
    }
}

#[derive(Debug, Deserialize)]
struct WireToken {
    token: String,
    logprob: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    text: String,
    tokens: Vec<WireToken>,
}

/// Remote generator: `POST {context, prompt, max_tokens, temperature}` and
/// expects `{text, tokens: [{token, logprob}]}`. Log-probabilities are
/// required.
pub struct WireGenerator {
    url: String,
    client: reqwest::blocking::Client,
}

impl WireGenerator {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self, GeneratorError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GeneratorError::Transport(e.to_string()))?;
        Ok(Self { url: url.into(), client })
    }
}

impl ActionGenerator for WireGenerator {
    fn generate(&mut self, request: &GenerationRequest) -> Result<Generation, GeneratorError> {
        let response = self
            .client
            .post(&self.url)
            .json(request)
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| GeneratorError::Transport(e.to_string()))?;
        let body: WireResponse = response.json().map_err(|e| GeneratorError::Protocol(e.to_string()))?;
        let mut pairs = Vec::with_capacity(body.tokens.len());
        for (i, t) in body.tokens.into_iter().enumerate() {
            let lp = t.logprob.ok_or_else(|| GeneratorError::Protocol(format!("token {i} has no logprob")))?;
            pairs.push((t.token, lp));
        }
        Ok(Generation {
            text: body.text,
            tokens: TokenProbSequence::from_logprobs_clamped(pairs, request.context.lines().next().unwrap_or_default()),
        })
    }
}
