//! Chat-completion backends: a deterministic transcript-keyed mock for
//! offline runs and tests, and a remote client speaking the common chat
//! wire format.

use std::collections::HashMap;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ChatRequest, ChatResponse, ReasonError};
use crate::textutil::fnv1a64;

/// A chat-completion backend.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ReasonError>;
}

/// Stable hash of a rendered prompt, as used by transcript files (16 hex
/// digits of FNV-1a 64).
pub fn prompt_hash(prompt: &str) -> String {
    format!("{:016x}", fnv1a64(prompt.as_bytes()))
}

#[derive(Serialize, Deserialize)]
struct TranscriptRecord {
    prompt_hash: String,
    response: String,
}

/// Deterministic mock keyed by the hash of the rendered prompt.
///
/// An unknown prompt is an error, not a fallback: a missing transcript entry
/// means the test or run is misconfigured and must surface loudly.
#[derive(Debug, Clone, Default)]
pub struct MockChatBackend {
    transcripts: HashMap<String, String>,
}

impl MockChatBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a canned response for an exact prompt.
    pub fn script(&mut self, prompt: &str, response: &str) {
        self.transcripts
            .insert(prompt_hash(prompt), response.to_string());
    }

    /// Register a canned response by precomputed hash.
    pub fn script_hash(&mut self, hash: &str, response: &str) {
        self.transcripts
            .insert(hash.to_string(), response.to_string());
    }

    pub fn len(&self) -> usize {
        self.transcripts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transcripts.is_empty()
    }

    /// Load a transcript file: one `{"prompt_hash": ..., "response": ...}`
    /// object per line.
    pub fn from_path(path: &Path) -> Result<Self, ReasonError> {
        let text = std::fs::read_to_string(path)?;
        let mut backend = MockChatBackend::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: TranscriptRecord = serde_json::from_str(line).map_err(|e| {
                ReasonError::BackendUnavailable(format!("bad transcript at line {}: {e}", idx + 1))
            })?;
            backend
                .transcripts
                .insert(record.prompt_hash, record.response);
        }
        Ok(backend)
    }

    /// Write the transcript file read by [`MockChatBackend::from_path`].
    pub fn save(&self, path: &Path) -> Result<(), ReasonError> {
        let mut records: Vec<TranscriptRecord> = self
            .transcripts
            .iter()
            .map(|(h, r)| TranscriptRecord {
                prompt_hash: h.clone(),
                response: r.clone(),
            })
            .collect();
        records.sort_by(|a, b| a.prompt_hash.cmp(&b.prompt_hash));
        let mut out = String::new();
        for record in records {
            out.push_str(&serde_json::to_string(&record).expect("record serializes"));
            out.push('\n');
        }
        crate::write_atomic(path, out.as_bytes())?;
        Ok(())
    }
}

impl ChatBackend for MockChatBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ReasonError> {
        let prompt = request
            .messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .unwrap_or_default();
        let hash = prompt_hash(prompt);
        match self.transcripts.get(&hash) {
            Some(response) => Ok(ChatResponse {
                text: response.clone(),
                latency_ms: 0,
            }),
            None => Err(ReasonError::MissingTranscript {
                hash,
                preview: prompt.chars().take(80).collect(),
            }),
        }
    }
}

/// Remote chat backend: `POST {base_url}` with
/// `{"model", "messages", "temperature", "seed"}`, bearer token from the
/// environment variable named by `token_env`.
#[derive(Debug, Clone)]
pub struct RemoteChatBackend {
    base_url: String,
    token_env: String,
    timeout: Duration,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

impl RemoteChatBackend {
    pub fn new(
        base_url: impl Into<String>,
        token_env: impl Into<String>,
        timeout: Duration,
    ) -> Self {
        RemoteChatBackend {
            base_url: base_url.into(),
            token_env: token_env.into(),
            timeout,
        }
    }
}

impl ChatBackend for RemoteChatBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ReasonError> {
        let agent = ureq::AgentBuilder::new().timeout(self.timeout).build();
        let mut req = agent
            .post(&self.base_url)
            .set("content-type", "application/json");
        if let Ok(token) = std::env::var(&self.token_env) {
            req = req.set("authorization", &format!("Bearer {token}"));
        }
        let started = Instant::now();
        let response = req
            .send_json(json!({
                "model": request.model,
                "messages": request.messages,
                "temperature": request.temperature,
                "seed": request.seed,
            }))
            .map_err(|e| match e {
                ureq::Error::Transport(t)
                    if t.kind() == ureq::ErrorKind::Io && started.elapsed() >= self.timeout =>
                {
                    ReasonError::Timeout {
                        seconds: self.timeout.as_secs(),
                    }
                }
                other => ReasonError::BackendUnavailable(other.to_string()),
            })?;
        let latency_ms = started.elapsed().as_millis() as u64;
        let body: CompletionResponse = response
            .into_json()
            .map_err(|e| ReasonError::BackendUnavailable(format!("bad response: {e}")))?;
        let text = body
            .choices
            .first()
            .map(|c| c.message.content.clone())
            .ok_or_else(|| ReasonError::BackendUnavailable("no choices in response".into()))?;
        Ok(ChatResponse { text, latency_ms })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_prompt_returns_the_canned_text() {
        let mut mock = MockChatBackend::new();
        mock.script("what knobs?", "[autocommit]");
        let request = ChatRequest::user("m", "what knobs?".to_string());
        assert_eq!(mock.complete(&request).unwrap().text, "[autocommit]");
    }

    #[test]
    fn unknown_prompt_is_a_loud_error() {
        let mock = MockChatBackend::new();
        let request = ChatRequest::user("m", "never scripted".to_string());
        let err = mock.complete(&request).unwrap_err();
        assert!(matches!(err, ReasonError::MissingTranscript { .. }));
    }

    #[test]
    fn transcript_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("transcript.jsonl");
        let mut mock = MockChatBackend::new();
        mock.script("prompt one", "response one");
        mock.script("prompt two", "{a: 1}");
        mock.save(&path).unwrap();
        let loaded = MockChatBackend::from_path(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        let request = ChatRequest::user("m", "prompt two".to_string());
        assert_eq!(loaded.complete(&request).unwrap().text, "{a: 1}");
    }

    #[test]
    fn request_defaults_pin_temperature_and_seed() {
        let request = ChatRequest::default();
        assert_eq!(request.temperature, 0.0);
        assert_eq!(request.seed, 42);
    }

    /// Live-endpoint smoke test, excluded from offline runs. Configure
    /// `CONFDBG_LIVE_CHAT_URL` (and optionally `CONFDBG_LIVE_CHAT_MODEL`,
    /// `CONFDBG_API_TOKEN`) and run with `--ignored`.
    #[test]
    #[ignore = "requires a live chat endpoint"]
    fn remote_backend_smoke() {
        let url = std::env::var("CONFDBG_LIVE_CHAT_URL")
            .expect("set CONFDBG_LIVE_CHAT_URL to run the live smoke test");
        let model =
            std::env::var("CONFDBG_LIVE_CHAT_MODEL").unwrap_or_else(|_| "gpt-3.5-turbo".into());
        let backend = RemoteChatBackend::new(url, "CONFDBG_API_TOKEN", Duration::from_secs(60));
        let request = ChatRequest::user(&model, "Reply with the single word: ready".into());
        let response = backend.complete(&request).unwrap();
        assert!(!response.text.trim().is_empty());
    }
}
