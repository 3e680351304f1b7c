//! Document representation: frozen base embeddings plus a trainable
//! per-source alignment network that maps heterogeneous sources into one
//! retrieval space, trained contrastively on mined triples.

mod align;
mod backend;
mod infonce;
mod miner;
mod trainer;

pub use align::{align, AlignmentNetwork};
pub use backend::{BaseEmbedder, HashEmbedder, RemoteEmbedder};
pub use infonce::{info_nce_loss, info_nce_with_grads, InfoNceGrads};
pub use miner::{mine_training_pairs, MinerConfig, MiningReport};
pub use trainer::{train_alignment, LossTrace, PhaseTrace, TrainConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DocumentKind;

/// Default embedding dimension.
pub const DEFAULT_DIM: usize = 768;

/// Which alignment stack an input routes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Question,
    Manual,
}

impl From<DocumentKind> for SourceKind {
    fn from(kind: DocumentKind) -> Self {
        match kind {
            DocumentKind::HistoricalQuestion | DocumentKind::SyntheticQuestion => {
                SourceKind::Question
            }
            DocumentKind::ManualSnippet => SourceKind::Manual,
        }
    }
}

/// Fixed-dimension dense vector with a cached Euclidean norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    norm: f64,
}

impl EmbeddingVector {
    /// Wrap a raw vector; every entry must be finite.
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFiniteEntry);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(EmbeddingVector { values, norm })
    }

    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector {
            values: vec![0.0; dim],
            norm: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Unit-normalized copy; the zero vector stays zero.
    pub fn normalized(&self) -> EmbeddingVector {
        if self.norm == 0.0 {
            return self.clone();
        }
        let values: Vec<f64> = self.values.iter().map(|v| v / self.norm).collect();
        EmbeddingVector::new(values).expect("normalizing finite values stays finite")
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Cosine similarity; zero when either vector has zero norm.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        if self.norm == 0.0 || other.norm == 0.0 {
            return 0.0;
        }
        self.dot(other) / (self.norm * other.norm)
    }

    pub fn euclidean(&self, other: &EmbeddingVector) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// One contrastive training instance: an anchor question, one positive
/// document whose knobs overlap the anchor's, and negatives whose knobs do
/// not.
#[derive(Debug, Clone)]
pub struct TrainingTriple {
    pub anchor_id: String,
    pub anchor: EmbeddingVector,
    pub positive_id: String,
    pub positive: EmbeddingVector,
    pub positive_kind: SourceKind,
    pub negatives: Vec<(String, EmbeddingVector)>,
    pub negative_kind: SourceKind,
    pub pair_type: PairType,
}

/// The three mined combinations of positive/negative document sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairType {
    /// Positive is a historical question, negatives are manual snippets.
    QuestionManual,
    /// Both sides are historical questions.
    QuestionQuestion,
    /// Both sides are manual snippets.
    ManualManual,
}

impl PairType {
    pub const ALL: [PairType; 3] = [
        PairType::ManualManual,
        PairType::QuestionQuestion,
        PairType::QuestionManual,
    ];

    pub fn positive_kind(self) -> SourceKind {
        match self {
            PairType::QuestionManual | PairType::QuestionQuestion => SourceKind::Question,
            PairType::ManualManual => SourceKind::Manual,
        }
    }

    pub fn negative_kind(self) -> SourceKind {
        match self {
            PairType::QuestionQuestion => SourceKind::Question,
            PairType::QuestionManual | PairType::ManualManual => SourceKind::Manual,
        }
    }
}

impl std::fmt::Display for PairType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PairType::QuestionManual => "question-manual",
            PairType::QuestionQuestion => "question-question",
            PairType::ManualManual => "manual-manual",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding entries must be finite")]
    NonFiniteEntry,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("temperature must be positive, got {tau}")]
    NonpositiveTau { tau: f64 },
    #[error("negatives must be nonempty")]
    EmptyNegatives,
    #[error("no training triples")]
    EmptyTriples,
    #[error("embedding backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}
