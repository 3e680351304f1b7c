//! Exact top-k nearest-neighbor retrieval over aligned document embeddings.
//!
//! The corpora here are small (thousands of vectors), so a flat exact scan
//! beats approximate indexes on both simplicity and recall. Vectors are
//! unit-normalized at build and query time and stored as 32-bit floats, so a
//! persistence round-trip reproduces every distance bit for bit. The index
//! is immutable after build; concurrent searches are safe.

use std::collections::BTreeSet;
use std::path::Path;

use thiserror::Error;

use crate::corpus::DocumentKind;
use crate::embed::EmbeddingVector;

/// One indexed document embedding.
#[derive(Debug, Clone)]
pub struct IndexEntry {
    pub doc_id: String,
    pub kind: DocumentKind,
    pub vector: EmbeddingVector,
}

/// One search result. Hits are sorted by `(distance, doc_id)` ascending with
/// consecutive 1-based ranks.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub doc_id: String,
    pub kind: DocumentKind,
    pub distance: f64,
    pub rank: usize,
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("duplicate document id `{id}`")]
    DuplicateId { id: String },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
}

#[derive(Debug, Clone)]
struct StoredEntry {
    doc_id: String,
    kind: DocumentKind,
    /// Unit-normalized, f32-quantized (the on-disk precision).
    vector: Vec<f32>,
}

/// Flat exact-scan vector index.
#[derive(Debug, Clone, Default)]
pub struct VectorIndex {
    dim: usize,
    entries: Vec<StoredEntry>,
}

const INDEX_MAGIC: &[u8; 4] = b"CDXI";
const INDEX_VERSION: u32 = 1;

fn normalize_to_f32(vector: &EmbeddingVector) -> Vec<f32> {
    vector
        .normalized()
        .as_slice()
        .iter()
        .map(|&v| v as f32)
        .collect()
}

/// Build an index over `entries`. Dimensions must be uniform and ids unique.
pub fn build_index(entries: Vec<IndexEntry>) -> Result<VectorIndex, IndexError> {
    let dim = entries.first().map_or(0, |e| e.vector.dim());
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut stored = Vec::with_capacity(entries.len());
    for entry in entries {
        if entry.vector.dim() != dim {
            return Err(IndexError::DimensionMismatch {
                expected: dim,
                got: entry.vector.dim(),
            });
        }
        if !seen.insert(entry.doc_id.clone()) {
            return Err(IndexError::DuplicateId { id: entry.doc_id });
        }
        stored.push(StoredEntry {
            doc_id: entry.doc_id,
            kind: entry.kind,
            vector: normalize_to_f32(&entry.vector),
        });
    }
    Ok(VectorIndex {
        dim,
        entries: stored,
    })
}

impl VectorIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The `k` entries nearest to `query` by Euclidean distance in the
    /// normalized space, ties broken by `doc_id`. Fewer than `k` hits only
    /// when the index is smaller than `k`.
    pub fn search_topk(
        &self,
        query: &EmbeddingVector,
        k: usize,
    ) -> Result<Vec<SearchHit>, IndexError> {
        if self.entries.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        let q = normalize_to_f32(query);
        let mut scored: Vec<(f64, usize)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (distance(&q, &e.vector), i))
            .collect();
        scored.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .expect("distances are finite")
                .then_with(|| self.entries[a.1].doc_id.cmp(&self.entries[b.1].doc_id))
        });
        Ok(scored
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(rank, (dist, i))| SearchHit {
                doc_id: self.entries[i].doc_id.clone(),
                kind: self.entries[i].kind,
                distance: dist,
                rank: rank + 1,
            })
            .collect())
    }

    /// Serialize: header (magic, version, dimension, count), per-entry
    /// records (length-prefixed id, kind byte, f32 vector), then a CRC32 of
    /// the entry payload. Written atomically.
    pub fn persist(&self, path: &Path) -> Result<(), IndexError> {
        let mut payload = Vec::new();
        for entry in &self.entries {
            payload.extend_from_slice(&(entry.doc_id.len() as u32).to_le_bytes());
            payload.extend_from_slice(entry.doc_id.as_bytes());
            payload.push(kind_byte(entry.kind));
            for &v in &entry.vector {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut bytes = Vec::with_capacity(20 + payload.len() + 4);
        bytes.extend_from_slice(INDEX_MAGIC);
        bytes.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        bytes.extend_from_slice(&(self.dim as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&payload);
        bytes.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
        crate::write_atomic(path, &bytes)?;
        Ok(())
    }

    /// Load an index written by [`VectorIndex::persist`].
    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let bytes = std::fs::read(path)?;
        if bytes.len() < 24 {
            return Err(IndexError::CorruptIndex("file too small".into()));
        }
        if &bytes[0..4] != INDEX_MAGIC {
            return Err(IndexError::CorruptIndex("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != INDEX_VERSION {
            return Err(IndexError::CorruptIndex(format!(
                "unsupported version {version}"
            )));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        if bytes.len() < 24 {
            return Err(IndexError::CorruptIndex("truncated header".into()));
        }
        let payload = &bytes[20..bytes.len() - 4];
        let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        if crc32fast::hash(payload) != stored_crc {
            return Err(IndexError::CorruptIndex("checksum mismatch".into()));
        }

        let mut entries = Vec::with_capacity(count);
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8], IndexError> {
            if *pos + n > payload.len() {
                return Err(IndexError::CorruptIndex("truncated payload".into()));
            }
            let slice = &payload[*pos..*pos + n];
            *pos += n;
            Ok(slice)
        };
        for _ in 0..count {
            let id_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            let doc_id = String::from_utf8(take(&mut pos, id_len)?.to_vec())
                .map_err(|_| IndexError::CorruptIndex("non-UTF-8 id".into()))?;
            let kind = kind_from_byte(take(&mut pos, 1)?[0])?;
            let mut vector = Vec::with_capacity(dim);
            for _ in 0..dim {
                vector.push(f32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()));
            }
            entries.push(StoredEntry {
                doc_id,
                kind,
                vector,
            });
        }
        if pos != payload.len() {
            return Err(IndexError::CorruptIndex("trailing bytes".into()));
        }
        Ok(VectorIndex { dim, entries })
    }
}

fn distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn kind_byte(kind: DocumentKind) -> u8 {
    match kind {
        DocumentKind::HistoricalQuestion => 0,
        DocumentKind::ManualSnippet => 1,
        DocumentKind::SyntheticQuestion => 2,
    }
}

fn kind_from_byte(b: u8) -> Result<DocumentKind, IndexError> {
    match b {
        0 => Ok(DocumentKind::HistoricalQuestion),
        1 => Ok(DocumentKind::ManualSnippet),
        2 => Ok(DocumentKind::SyntheticQuestion),
        other => Err(IndexError::CorruptIndex(format!("bad kind byte {other}"))),
    }
}
