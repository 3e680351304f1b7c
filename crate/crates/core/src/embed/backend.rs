//! Base embedding backends. The base model is frozen: it never trains here;
//! alignment happens downstream.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{EmbedError, EmbeddingVector, SourceKind};
use crate::textutil::{fnv1a64, tokens};

/// A frozen text-to-vector encoder.
pub trait BaseEmbedder: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed(&self, text: &str, kind: SourceKind) -> Result<EmbeddingVector, EmbedError>;

    fn embed_batch(
        &self,
        texts: &[&str],
        kind: SourceKind,
    ) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| self.embed(t, kind)).collect()
    }
}

/// Deterministic local embedder: signed hashing of lowercase word 1- and
/// 2-grams into `dim` buckets, L2-normalized.
///
/// Identical text always yields a bitwise-identical vector, and the zero
/// vector appears only for text with no tokens.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashEmbedder { dim }
    }
}

impl BaseEmbedder for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str, _kind: SourceKind) -> Result<EmbeddingVector, EmbedError> {
        let mut values = vec![0.0_f64; self.dim];
        let mut previous: Option<String> = None;
        for token in tokens(text) {
            bump(&mut values, token.as_bytes());
            if let Some(prev) = &previous {
                let bigram = format!("{prev} {token}");
                bump(&mut values, bigram.as_bytes());
            }
            previous = Some(token);
        }
        let v = EmbeddingVector::new(values).expect("hash counts are finite");
        Ok(v.normalized())
    }
}

fn bump(values: &mut [f64], gram: &[u8]) {
    let h = fnv1a64(gram);
    let bucket = (h % values.len() as u64) as usize;
    let sign = if (h >> 63) & 1 == 1 { -1.0 } else { 1.0 };
    values[bucket] += sign;
}

/// Remote embedding backend speaking the common embeddings wire format:
/// `POST {base_url} {"input": [texts], "model": name}` with a bearer token
/// taken from the environment variable named by `token_env`.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    base_url: String,
    model: String,
    token_env: String,
    dim: usize,
    timeout: Duration,
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingRow>,
}

#[derive(Deserialize)]
struct EmbeddingRow {
    embedding: Vec<f64>,
}

impl RemoteEmbedder {
    pub fn new(
        base_url: impl Into<String>,
        model: impl Into<String>,
        token_env: impl Into<String>,
        dim: usize,
        timeout: Duration,
    ) -> Self {
        RemoteEmbedder {
            base_url: base_url.into(),
            model: model.into(),
            token_env: token_env.into(),
            dim,
            timeout,
        }
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let agent = ureq::AgentBuilder::new().timeout(self.timeout).build();
        let mut req = agent
            .post(&self.base_url)
            .set("content-type", "application/json");
        if let Ok(token) = std::env::var(&self.token_env) {
            req = req.set("authorization", &format!("Bearer {token}"));
        }
        let response = req
            .send_json(json!({ "input": texts, "model": self.model }))
            .map_err(|e| EmbedError::BackendUnavailable(e.to_string()))?;
        let body: EmbeddingsResponse = response
            .into_json()
            .map_err(|e| EmbedError::BackendUnavailable(format!("bad response: {e}")))?;
        if body.data.len() != texts.len() {
            return Err(EmbedError::BackendUnavailable(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                body.data.len()
            )));
        }
        body.data
            .into_iter()
            .map(|row| {
                if row.embedding.len() != self.dim {
                    return Err(EmbedError::DimensionMismatch {
                        expected: self.dim,
                        got: row.embedding.len(),
                    });
                }
                EmbeddingVector::new(row.embedding)
            })
            .collect()
    }
}

impl BaseEmbedder for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str, _kind: SourceKind) -> Result<EmbeddingVector, EmbedError> {
        Ok(self.request(&[text])?.remove(0))
    }

    fn embed_batch(
        &self,
        texts: &[&str],
        _kind: SourceKind,
    ) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        self.request(texts)
    }
}
