//! The two retrieval sources — historical questions and troubleshooting
//! manuals — plus dataset splitting.
//!
//! Documents live in a line-delimited file (one JSON object per line with
//! fields `id`, `kind`, `text`, `knobs`, `source`); the writer emits
//! byte-stable output so round-trips are exact. Loaded corpora are immutable
//! and safe to share across threads.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knobspace::{extract_knobs, KnobRegistry, Recommendation};

/// Which source a retrievable document came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentKind {
    HistoricalQuestion,
    ManualSnippet,
    SyntheticQuestion,
}

/// A retrievable unit: a historical question or a manual sentence, labeled
/// with the knobs it is about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub kind: DocumentKind,
    pub text: String,
    pub knobs: BTreeSet<String>,
    /// Provenance, e.g. a manual section title. Required for manual snippets.
    pub source: String,
}

/// A natural-language debugging question with its ground-truth knob set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebugQuestion {
    pub id: String,
    pub text: String,
    pub gold_knobs: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gold_values: Vec<Recommendation>,
}

/// A 3-way partition of questions into retrieval corpus, training and test
/// sets.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub historical: Vec<Document>,
    pub train: Vec<DebugQuestion>,
    pub test: Vec<DebugQuestion>,
    pub ratios: (usize, usize, usize),
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed corpus at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: document `{id}` labeled with unknown knob `{knob}`")]
    UnknownKnobLabel {
        line: usize,
        id: String,
        knob: String,
    },
    #[error("empty input")]
    EmptyInput,
    #[error("ratios must be positive")]
    BadRatios,
}

/// Load documents from a line-delimited corpus file, validating every knob
/// label against the registry. Order is preserved.
pub fn load_corpus(path: &Path, registry: &KnobRegistry) -> Result<Vec<Document>, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    parse_corpus(&text, registry)
}

/// Load and concatenate several corpus files. With more than one file the
/// document ids are namespaced by the file stem (`stem/original-id`) so
/// merged sources cannot collide.
pub fn load_corpora(
    paths: &[impl AsRef<Path>],
    registry: &KnobRegistry,
) -> Result<Vec<Document>, CorpusError> {
    let mut documents = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let mut docs = load_corpus(path, registry)?;
        if paths.len() > 1 {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            for doc in &mut docs {
                doc.id = format!("{stem}/{}", doc.id);
            }
        }
        documents.append(&mut docs);
    }
    Ok(documents)
}

/// Parse corpus file content; see [`load_corpus`].
pub fn parse_corpus(text: &str, registry: &KnobRegistry) -> Result<Vec<Document>, CorpusError> {
    let mut docs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        validate_document(&doc, registry, line_no)?;
        docs.push(doc);
    }
    Ok(docs)
}

fn validate_document(
    doc: &Document,
    registry: &KnobRegistry,
    line: usize,
) -> Result<(), CorpusError> {
    if doc.text.trim().is_empty() {
        return Err(CorpusError::Malformed {
            line,
            message: format!("document `{}` has empty text", doc.id),
        });
    }
    if doc.kind == DocumentKind::ManualSnippet && doc.source.trim().is_empty() {
        return Err(CorpusError::Malformed {
            line,
            message: format!("manual snippet `{}` has no source section", doc.id),
        });
    }
    for knob in &doc.knobs {
        if !registry.contains(knob) {
            return Err(CorpusError::UnknownKnobLabel {
                line,
                id: doc.id.clone(),
                knob: knob.clone(),
            });
        }
    }
    Ok(())
}

/// Serialize documents in the corpus file format. Output is byte-stable:
/// fixed field order, knob sets sorted.
pub fn render_corpus(docs: &[Document]) -> String {
    let mut out = String::new();
    for doc in docs {
        out.push_str(&serde_json::to_string(doc).expect("document serialization cannot fail"));
        out.push('\n');
    }
    out
}

/// Write documents to `path` atomically in the corpus file format.
pub fn save_corpus(docs: &[Document], path: &Path) -> Result<(), CorpusError> {
    crate::write_atomic(path, render_corpus(docs).as_bytes())?;
    Ok(())
}

/// Load debugging questions from a line-delimited file (one JSON object per
/// line with `id`, `text`, `gold_knobs`, optional `gold_values`).
pub fn load_questions(
    path: &Path,
    registry: &KnobRegistry,
) -> Result<Vec<DebugQuestion>, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    let mut questions = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let q: DebugQuestion = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if q.gold_knobs.is_empty() {
            return Err(CorpusError::Malformed {
                line: line_no,
                message: format!("question `{}` has no gold knobs", q.id),
            });
        }
        for knob in &q.gold_knobs {
            if !registry.contains(knob) {
                return Err(CorpusError::UnknownKnobLabel {
                    line: line_no,
                    id: q.id.clone(),
                    knob: knob.clone(),
                });
            }
        }
        questions.push(q);
    }
    Ok(questions)
}

/// Write questions to `path` atomically, one JSON object per line.
pub fn save_questions(questions: &[DebugQuestion], path: &Path) -> Result<(), CorpusError> {
    let mut out = String::new();
    for q in questions {
        out.push_str(&serde_json::to_string(q).expect("question serialization cannot fail"));
        out.push('\n');
    }
    crate::write_atomic(path, out.as_bytes())?;
    Ok(())
}

/// Split raw manual text into sentences and keep the ones that mention a
/// registry knob, labeled with the mentioned knobs.
///
/// Sentences end at `.`, `?` or `!` outside backtick code spans, so
/// identifiers like `` `performance_schema.threads` `` do not split a
/// sentence. Sentences with no knob label carry no retrieval value and are
/// dropped. `source` names the originating manual section.
pub fn segment_manual(
    raw_manual_text: &str,
    registry: &KnobRegistry,
    source: &str,
) -> Vec<Document> {
    let mut docs = Vec::new();
    let slug = slugify(source);
    for (i, sentence) in split_sentences(raw_manual_text).into_iter().enumerate() {
        let knobs = extract_knobs(&sentence, registry);
        if knobs.is_empty() {
            continue;
        }
        docs.push(Document {
            id: format!("{slug}-s{i}"),
            kind: DocumentKind::ManualSnippet,
            text: sentence,
            knobs,
            source: source.to_string(),
        });
    }
    docs
}

fn split_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut in_code = false;
    for c in text.chars() {
        if c == '`' {
            in_code = !in_code;
            current.push(c);
            continue;
        }
        current.push(c);
        if !in_code && matches!(c, '.' | '?' | '!') {
            push_sentence(&mut sentences, &mut current);
        }
    }
    push_sentence(&mut sentences, &mut current);
    sentences
}

fn push_sentence(sentences: &mut Vec<String>, current: &mut String) {
    let s = current.trim().replace(['\n', '\r'], " ");
    if !s.is_empty() {
        sentences.push(s);
    }
    current.clear();
}

fn slugify(s: &str) -> String {
    let mut slug: String = s
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '-'
            }
        })
        .collect();
    while slug.contains("--") {
        slug = slug.replace("--", "-");
    }
    slug.trim_matches('-').to_string()
}

/// Deterministically shuffle `questions` under `seed` and partition them by
/// `ratios` into (historical, train, test). The historical part is converted
/// to retrieval documents. Bucket boundaries use cumulative rounding, so
/// sizes honor the ratio within one item.
pub fn split_dataset(
    questions: &[DebugQuestion],
    ratios: (usize, usize, usize),
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    if questions.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let (a, b, c) = ratios;
    if a == 0 || b == 0 || c == 0 {
        return Err(CorpusError::BadRatios);
    }
    let total = (a + b + c) as f64;
    let n = questions.len();

    let mut shuffled: Vec<DebugQuestion> = questions.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let bound1 = ((n as f64) * (a as f64) / total).round() as usize;
    let bound2 = ((n as f64) * ((a + b) as f64) / total).round() as usize;
    let bound1 = bound1.min(n);
    let bound2 = bound2.clamp(bound1, n);

    let test = shuffled.split_off(bound2);
    let train = shuffled.split_off(bound1);
    let historical = shuffled
        .into_iter()
        .map(|q| Document {
            id: q.id,
            kind: DocumentKind::HistoricalQuestion,
            text: q.text,
            knobs: q.gold_knobs,
            source: "historical".to_string(),
        })
        .collect();

    Ok(DatasetSplit {
        historical,
        train,
        test,
        ratios,
    })
}
