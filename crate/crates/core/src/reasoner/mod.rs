//! Configuration reasoning: prompt assembly from retrieved context, the
//! chat-completion backend abstraction, and the two-phase
//! knob-identification / value-recommendation flow.

mod backend;
mod pipeline;
mod prompt;

pub use backend::{prompt_hash, ChatBackend, MockChatBackend, RemoteChatBackend};
pub use pipeline::{
    parse_knob_list, phase1_identify_knobs, phase2_recommend_values, DiagnosisResult,
    Phase1Outcome, Phase2Outcome, Pipeline, PipelineConfig,
};
pub use prompt::{assemble_prompt, PromptBundle};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How the prompt is framed. `Rag` is the full retrieval-augmented prompt;
/// the others reproduce common baselines (no retrieved context).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PromptStrategy {
    #[default]
    Rag,
    Plain,
    /// Plain prompt with every registry knob listed in the instruction.
    AllKnobs,
    ChainOfThought,
    TaskDecomposition,
}

impl std::str::FromStr for PromptStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rag" => Ok(PromptStrategy::Rag),
            "plain" => Ok(PromptStrategy::Plain),
            "all-knobs" | "all_knobs" => Ok(PromptStrategy::AllKnobs),
            "cot" | "chain-of-thought" => Ok(PromptStrategy::ChainOfThought),
            "task-decomposition" | "task_decomposition" => Ok(PromptStrategy::TaskDecomposition),
            other => Err(format!("unknown prompt strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// A chat-completion request. Defaults pin `temperature = 0` and
/// `seed = 42` so reruns are reproducible where the backend honors them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for ChatRequest {
    fn default() -> Self {
        ChatRequest {
            model: "default".to_string(),
            messages: Vec::new(),
            temperature: 0.0,
            seed: 42,
        }
    }
}

impl ChatRequest {
    pub fn user(model: &str, prompt: String) -> Self {
        ChatRequest {
            model: model.to_string(),
            messages: vec![ChatMessage {
                role: "user".to_string(),
                content: prompt,
            }],
            ..ChatRequest::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub latency_ms: u64,
}

/// One request/response pair, kept for audit trails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub request: ChatRequest,
    pub response: ChatResponse,
}

#[derive(Debug, Error)]
pub enum ReasonError {
    #[error("response carried no parseable output block (format failure)")]
    FormatFailure,
    #[error("no transcript entry for prompt hash {hash} (prompt starts: {preview:?})")]
    MissingTranscript { hash: String, preview: String },
    #[error("chat backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("chat backend timed out after {seconds}s")]
    Timeout { seconds: u64 },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Embed(#[from] crate::embed::EmbedError),
    #[error(transparent)]
    Index(#[from] crate::vectorstore::IndexError),
}
