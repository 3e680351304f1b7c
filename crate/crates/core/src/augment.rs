//! Logic-chain training-data synthesis.
//!
//! Straightforwardly asking a model to invent questions from manual text
//! yields unrealistic, samey output. Instead, question generation is
//! decomposed along the chain
//! `knob -> function -> resolvable issue -> triggering behavior`, one
//! backend call per edge, and the collected answers are composed into a
//! first-person debugging question labeled with the chain's knob.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, DocumentKind};
use crate::knobspace::{KnobRegistry, KnobSpec};
use crate::reasoner::{ChatBackend, ChatRequest, ReasonError};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One traversal of the reasoning chain for a knob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicChain {
    pub knob: String,
    /// What the knob does (one specific function of possibly many).
    pub function: String,
    /// An anomaly that function can resolve.
    pub issue: String,
    /// The user behavior that triggers the issue.
    pub behavior: String,
    pub composed_question: Option<String>,
}

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("response had no parseable content (format failure)")]
    FormatFailure,
    #[error("knob `{knob}` has no manual snippets")]
    NoSnippets { knob: String },
    #[error(transparent)]
    Backend(#[from] ReasonError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

fn ask(backend: &dyn ChatBackend, model: &str, prompt: String) -> Result<String, AugmentError> {
    let response = backend.complete(&ChatRequest::user(model, prompt))?;
    Ok(response.text)
}

/// Ask for the functions of a knob given its manual snippets; the response
/// must be a bulleted list, one function per `- ` line.
pub fn derive_functions(
    knob: &KnobSpec,
    manual_snippets: &[&Document],
    backend: &dyn ChatBackend,
    model: &str,
) -> Result<Vec<String>, AugmentError> {
    if manual_snippets.is_empty() {
        return Err(AugmentError::NoSnippets {
            knob: knob.name.clone(),
        });
    }
    let mut prompt = format!(
        "What are the functions of `{}`? Answer with a bulleted list, one function per line starting with `- `, and nothing else.\nManual excerpts:\n",
        knob.name
    );
    for snippet in manual_snippets {
        prompt.push_str("  ");
        prompt.push_str(&snippet.text);
        prompt.push('\n');
    }
    let response = ask(backend, model, prompt)?;
    let functions: Vec<String> = response
        .lines()
        .filter_map(|l| l.trim().strip_prefix("- "))
        .map(|f| f.trim().to_string())
        .filter(|f| !f.is_empty())
        .collect();
    if functions.is_empty() {
        return Err(AugmentError::FormatFailure);
    }
    Ok(functions)
}

/// Ask what anomaly the given function of a knob can resolve; a single
/// nonempty paragraph is expected.
pub fn derive_issue(
    knob: &str,
    function: &str,
    backend: &dyn ChatBackend,
    model: &str,
) -> Result<String, AugmentError> {
    let prompt = format!(
        "What anomaly can be solved with the function \"{function}\" of `{knob}`? Answer with a single short paragraph describing the anomaly."
    );
    single_paragraph(ask(backend, model, prompt)?)
}

/// Ask what user behavior triggers the issue; a single nonempty paragraph is
/// expected.
pub fn derive_behavior(
    knob: &str,
    issue: &str,
    backend: &dyn ChatBackend,
    model: &str,
) -> Result<String, AugmentError> {
    let prompt = format!(
        "What user behavior triggers the issue \"{issue}\" that `{knob}` can resolve? Answer with a single short paragraph describing the behavior."
    );
    single_paragraph(ask(backend, model, prompt)?)
}

fn single_paragraph(text: String) -> Result<String, AugmentError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(AugmentError::FormatFailure);
    }
    Ok(trimmed.to_string())
}

/// Integrate a completed chain into a realistic first-person question,
/// emitted as a synthetic-question document labeled with exactly the
/// chain's knob.
pub fn compose_question(
    chain: &LogicChain,
    doc_id: String,
    backend: &dyn ChatBackend,
    model: &str,
) -> Result<Document, AugmentError> {
    let text = single_paragraph(ask(backend, model, compose_prompt(chain))?)?;
    Ok(Document {
        id: doc_id,
        kind: DocumentKind::SyntheticQuestion,
        text,
        knobs: [chain.knob.clone()].into_iter().collect(),
        source: "logic-chain synthesis".to_string(),
    })
}

/// The composition prompt for a completed chain (public so transcripts can
/// be scripted against the exact bytes).
pub fn compose_prompt(chain: &LogicChain) -> String {
    format!(
        "A database user performed the behavior: {behavior}\nThis triggered the issue: {issue}\nThe issue can be resolved by the function \"{function}\" of the knob `{knob}`.\nWrite the realistic first-person debugging question this user would post, including the relevant context of what they did. Do not mention the knob name. Output only the question.",
        behavior = chain.behavior,
        issue = chain.issue,
        function = chain.function,
        knob = chain.knob,
    )
}

/// Status of one attempted chain, for the synthesis report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisRecord {
    pub knob: String,
    pub function_index: usize,
    pub status: SynthesisStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisStatus {
    Ok,
    Failed,
}

/// Aggregated outcome of a synthesis run.
#[derive(Debug, Clone, Default)]
pub struct SynthesisReport {
    pub records: Vec<SynthesisRecord>,
    /// Knobs skipped for lack of manual snippets, or whose function
    /// derivation failed outright.
    pub skipped_knobs: Vec<(String, String)>,
}

impl SynthesisReport {
    pub fn attempted(&self) -> usize {
        self.records.len()
    }

    pub fn succeeded(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.status == SynthesisStatus::Ok)
            .count()
    }

    pub fn failed(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.status == SynthesisStatus::Failed)
            .count()
    }

    /// Line-delimited report: one JSON record per attempted chain.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

/// Walk the chain for every registry knob that has manual snippets,
/// composing up to `per_knob` questions per knob (functions cycled
/// round-robin). Failures are recorded and skipped; the knob processing
/// order is a deterministic shuffle under `seed`.
pub fn synthesize_dataset(
    registry: &KnobRegistry,
    manual_corpus: &[Document],
    per_knob: usize,
    backend: &dyn ChatBackend,
    model: &str,
    seed: u64,
) -> (Vec<Document>, SynthesisReport) {
    let mut report = SynthesisReport::default();
    let mut documents = Vec::new();
    if per_knob == 0 {
        return (documents, report);
    }

    let mut knob_names: Vec<&str> = registry.names().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    knob_names.shuffle(&mut rng);

    for knob_name in knob_names {
        let spec = registry
            .get(knob_name)
            .expect("name comes from the registry");
        let snippets: Vec<&Document> = manual_corpus
            .iter()
            .filter(|d| d.kind == DocumentKind::ManualSnippet && d.knobs.contains(knob_name))
            .collect();
        if snippets.is_empty() {
            report
                .skipped_knobs
                .push((knob_name.to_string(), "no manual snippets".to_string()));
            continue;
        }
        let functions = match derive_functions(spec, &snippets, backend, model) {
            Ok(f) => f,
            Err(e) => {
                report
                    .skipped_knobs
                    .push((knob_name.to_string(), e.to_string()));
                continue;
            }
        };
        for chain_idx in 0..per_knob {
            let function_index = chain_idx % functions.len();
            let outcome = run_chain(
                knob_name,
                &functions[function_index],
                chain_idx,
                backend,
                model,
            );
            match outcome {
                Ok(doc) => {
                    documents.push(doc);
                    report.records.push(SynthesisRecord {
                        knob: knob_name.to_string(),
                        function_index,
                        status: SynthesisStatus::Ok,
                        error: None,
                    });
                }
                Err(e) => {
                    report.records.push(SynthesisRecord {
                        knob: knob_name.to_string(),
                        function_index,
                        status: SynthesisStatus::Failed,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
    }
    (documents, report)
}

fn run_chain(
    knob: &str,
    function: &str,
    chain_idx: usize,
    backend: &dyn ChatBackend,
    model: &str,
) -> Result<Document, AugmentError> {
    let issue = derive_issue(knob, function, backend, model)?;
    let behavior = derive_behavior(knob, &issue, backend, model)?;
    let chain = LogicChain {
        knob: knob.to_string(),
        function: function.to_string(),
        issue,
        behavior,
        composed_question: None,
    };
    compose_question(&chain, format!("syn-{knob}-{chain_idx}"), backend, model)
}
