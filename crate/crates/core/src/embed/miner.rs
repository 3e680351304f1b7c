//! Contrastive pair mining.
//!
//! For each anchor question, documents are ranked by base-embedding
//! similarity; the top of that ranking supplies positives (knob labels
//! overlapping the anchor's gold knobs) and negatives (no overlap), in equal
//! counts, for each of the three source combinations.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{BaseEmbedder, EmbedError, PairType, SourceKind, TrainingTriple};
use crate::corpus::{DebugQuestion, Document};

#[derive(Debug, Clone, Copy)]
pub struct MinerConfig {
    /// Positives (and negatives) mined per anchor and pair type.
    pub per_anchor: usize,
    /// Similarity-ranked candidate pool examined before the overlap filter.
    pub candidate_pool: usize,
    pub seed: u64,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            per_anchor: 4,
            candidate_pool: 50,
            seed: 0,
        }
    }
}

/// What the miner skipped and why.
#[derive(Debug, Default)]
pub struct MiningReport {
    /// Anchors with no positive document available, skipped entirely.
    pub no_positive: Vec<String>,
    /// Triples emitted per pair type, in `PairType::ALL` order.
    pub per_type: [usize; 3],
}

/// Mine training triples from `questions` against `docs`.
///
/// Anchors whose gold knobs overlap no document are reported in the result
/// rather than failing the batch. Output order is deterministic under the
/// config seed.
pub fn mine_training_pairs(
    questions: &[DebugQuestion],
    docs: &[Document],
    embedder: &dyn BaseEmbedder,
    config: &MinerConfig,
) -> Result<(Vec<TrainingTriple>, MiningReport), EmbedError> {
    let doc_embeddings: Vec<_> = docs
        .iter()
        .map(|d| embedder.embed(&d.text, SourceKind::from(d.kind)))
        .collect::<Result<_, _>>()?;

    let mut triples = Vec::new();
    let mut report = MiningReport::default();

    for question in questions {
        let anchor = embedder.embed(&question.text, SourceKind::Question)?;

        // Rank all documents by similarity to the anchor, most similar first,
        // ties broken by id for determinism.
        let mut ranked: Vec<usize> = (0..docs.len()).collect();
        let sims: Vec<f64> = doc_embeddings.iter().map(|e| anchor.cosine(e)).collect();
        ranked.sort_by(|&a, &b| {
            sims[b]
                .partial_cmp(&sims[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| docs[a].id.cmp(&docs[b].id))
        });
        ranked.truncate(config.candidate_pool);

        let overlaps = |idx: usize| -> bool {
            docs[idx]
                .knobs
                .intersection(&question.gold_knobs)
                .next()
                .is_some()
        };

        let mut anchor_had_positive = false;
        for (type_idx, pair_type) in PairType::ALL.iter().enumerate() {
            let pos_kind = pair_type.positive_kind();
            let neg_kind = pair_type.negative_kind();
            let positives: Vec<usize> = ranked
                .iter()
                .copied()
                .filter(|&i| SourceKind::from(docs[i].kind) == pos_kind && overlaps(i))
                .take(config.per_anchor)
                .collect();
            let negatives: Vec<usize> = ranked
                .iter()
                .copied()
                .filter(|&i| SourceKind::from(docs[i].kind) == neg_kind && !overlaps(i))
                .take(config.per_anchor)
                .collect();
            let count = positives.len().min(negatives.len());
            if count == 0 {
                continue;
            }
            anchor_had_positive = true;
            let negative_set: Vec<(String, super::EmbeddingVector)> = negatives[..count]
                .iter()
                .map(|&i| (docs[i].id.clone(), doc_embeddings[i].clone()))
                .collect();
            for &pos_idx in &positives[..count] {
                triples.push(TrainingTriple {
                    anchor_id: question.id.clone(),
                    anchor: anchor.clone(),
                    positive_id: docs[pos_idx].id.clone(),
                    positive: doc_embeddings[pos_idx].clone(),
                    positive_kind: pos_kind,
                    negatives: negative_set.clone(),
                    negative_kind: neg_kind,
                    pair_type: *pair_type,
                });
                report.per_type[type_idx] += 1;
            }
        }
        if !anchor_had_positive {
            report.no_positive.push(question.id.clone());
        }
    }

    // Deterministic shuffle within each pair type; the curriculum order
    // across types is the trainer's concern.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut shuffled = Vec::with_capacity(triples.len());
    for pair_type in PairType::ALL {
        let mut group: Vec<TrainingTriple> = triples
            .iter()
            .filter(|t| t.pair_type == pair_type)
            .cloned()
            .collect();
        group.shuffle(&mut rng);
        shuffled.extend(group);
    }
    Ok((shuffled, report))
}
