//! Deterministic synthetic-workload generators backing the test suites:
//! two-source clustered embedding corpora (reproducing the cross-source
//! heterogeneity gap that alignment training has to close) and seasonal
//! series with injected spikes (ground truth for the anomaly detector).
//!
//! All randomness comes from ChaCha8 streams seeded from the generator
//! parameters, with gaussians drawn by the Box-Muller transform, so every
//! generator is a pure function of its parameters and reproducible from the
//! documented constants.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{DebugQuestion, Document, DocumentKind};
use crate::embed::{BaseEmbedder, EmbedError, EmbeddingVector, SourceKind};
use crate::telemetry::TelemetrySeries;

/// Spec for a clustered two-source corpus.
///
/// Cluster centers sit on a line, spaced by the cross-source offset
/// magnitude, and manual-kind embeddings are shifted by the offset vector,
/// which points 45 degrees off the cluster line. Each manual cluster
/// therefore lands closer to its neighbor cluster's center than to its own:
/// question-to-manual retrieval breaks for every cluster but the first,
/// while retrieval within either source stays clean. The gap is a pure
/// translation, so an alignment map can provably cancel it.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticCorpusSpec {
    pub clusters: usize,
    pub docs_per_cluster_per_kind: usize,
    /// Expected norm of the within-cluster noise vector.
    pub noise: f64,
    /// Norm of the fixed cross-source offset vector.
    pub offset: f64,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        SyntheticCorpusSpec {
            clusters: 4,
            docs_per_cluster_per_kind: 10,
            noise: 0.3,
            offset: 0.9,
            dim: 32,
            seed: 0,
        }
    }
}

/// Planted ground truth emitted next to the generated data, so tests never
/// re-derive it.
#[derive(Debug, Clone)]
pub struct CorpusTruth {
    /// Cluster of every document and question, by id.
    pub cluster_of: BTreeMap<String, usize>,
    /// Knob label of each cluster.
    pub cluster_knobs: Vec<String>,
    pub centers: Vec<Vec<f64>>,
    pub offset_vector: Vec<f64>,
}

/// A generated corpus: documents and anchor questions with planted base
/// embeddings keyed by text.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub documents: Vec<Document>,
    pub questions: Vec<DebugQuestion>,
    pub truth: CorpusTruth,
    embeddings: BTreeMap<String, EmbeddingVector>,
    dim: usize,
}

impl SyntheticCorpus {
    /// Base embedder over the planted vectors. Unknown text is an error: the
    /// generator owns every text it emits.
    pub fn embedder(&self) -> PlantedEmbedder {
        PlantedEmbedder {
            map: self.embeddings.clone(),
            dim: self.dim,
        }
    }

    pub fn embedding_of(&self, text: &str) -> Option<&EmbeddingVector> {
        self.embeddings.get(text)
    }
}

/// [`BaseEmbedder`] backed by a fixed text-to-vector table.
#[derive(Debug, Clone)]
pub struct PlantedEmbedder {
    map: BTreeMap<String, EmbeddingVector>,
    dim: usize,
}

impl BaseEmbedder for PlantedEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str, _kind: SourceKind) -> Result<EmbeddingVector, EmbedError> {
        self.map.get(text).cloned().ok_or_else(|| {
            EmbedError::BackendUnavailable(format!("no planted vector for `{text}`"))
        })
    }
}

/// Standard gaussian via the Box-Muller transform on two ChaCha8 uniforms.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| gaussian(rng)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn scale_to(v: &[f64], target: f64) -> Vec<f64> {
    let n = norm(v);
    if n == 0.0 {
        return v.to_vec();
    }
    v.iter().map(|x| x / n * target).collect()
}

/// A fresh unit vector orthogonal to every vector in `basis`
/// (Gram-Schmidt on a random draw).
fn orthonormal_to(rng: &mut ChaCha8Rng, dim: usize, basis: &[&[f64]]) -> Vec<f64> {
    let mut v = gaussian_vec(rng, dim);
    for b in basis {
        let proj: f64 = v.iter().zip(b.iter()).map(|(a, x)| a * x).sum();
        for (vi, bi) in v.iter_mut().zip(b.iter()) {
            *vi -= proj * bi;
        }
    }
    scale_to(&v, 1.0)
}

/// Generate the two-source corpus described by `spec`.
pub fn gen_corpus(spec: &SyntheticCorpusSpec) -> SyntheticCorpus {
    assert!(spec.clusters > 0 && spec.docs_per_cluster_per_kind > 0 && spec.dim >= 4);
    assert!(spec.noise >= 0.0 && spec.offset >= 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.dim;

    // Three orthonormal directions: the cluster line, the lift that keeps
    // the clusters off the origin, and the skew component of the offset.
    let line = scale_to(&gaussian_vec(&mut rng, dim), 1.0);
    let lift = orthonormal_to(&mut rng, dim, &[&line]);
    let skew = orthonormal_to(&mut rng, dim, &[&line, &lift]);

    let spacing = if spec.offset > 0.0 {
        spec.offset
    } else {
        (3.0 * spec.noise).max(1.0)
    };
    // Lift the cluster line far enough off the origin that unit
    // normalization downstream keeps the geometry near-isometric.
    let base_height = 2.0 * spacing * spec.clusters as f64;

    let centers: Vec<Vec<f64>> = (0..spec.clusters)
        .map(|c| {
            (0..dim)
                .map(|i| base_height * lift[i] + (c as f64 + 1.0) * spacing * line[i])
                .collect()
        })
        .collect();
    // 45 degrees off the cluster line: a shifted manual cluster lands nearer
    // its neighbor's center than its own without collapsing onto it.
    let cos45 = std::f64::consts::FRAC_1_SQRT_2;
    let offset_vector: Vec<f64> = line
        .iter()
        .zip(skew.iter())
        .map(|(g, s)| spec.offset * (cos45 * g + cos45 * s))
        .collect();

    // Per-coordinate sigma keeping the expected noise-vector norm at
    // `spec.noise`.
    let sigma = spec.noise / (dim as f64).sqrt();
    let sample = |center: &[f64], shift: Option<&[f64]>, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..dim)
            .map(|i| center[i] + shift.map_or(0.0, |s| s[i]) + sigma * gaussian(rng))
            .collect()
    };

    let mut documents = Vec::new();
    let mut questions = Vec::new();
    let mut embeddings = BTreeMap::new();
    let mut cluster_of = BTreeMap::new();
    let cluster_knobs: Vec<String> = (0..spec.clusters)
        .map(|c| format!("syn_knob_{c:02}"))
        .collect();

    for c in 0..spec.clusters {
        let knob = &cluster_knobs[c];
        for i in 0..spec.docs_per_cluster_per_kind {
            // Question-kind document.
            let qid = format!("synq-c{c}-{i}");
            let qtext = format!("synthetic question {i} of cluster {c}");
            embeddings.insert(
                qtext.clone(),
                EmbeddingVector::new(sample(&centers[c], None, &mut rng))
                    .expect("generated values are finite"),
            );
            cluster_of.insert(qid.clone(), c);
            documents.push(Document {
                id: qid,
                kind: DocumentKind::HistoricalQuestion,
                text: qtext,
                knobs: [knob.clone()].into_iter().collect(),
                source: "synthetic".into(),
            });

            // Manual-kind document, shifted by the cross-source offset.
            let mid = format!("synm-c{c}-{i}");
            let mtext = format!("synthetic manual snippet {i} of cluster {c}");
            embeddings.insert(
                mtext.clone(),
                EmbeddingVector::new(sample(&centers[c], Some(&offset_vector), &mut rng))
                    .expect("generated values are finite"),
            );
            cluster_of.insert(mid.clone(), c);
            documents.push(Document {
                id: mid,
                kind: DocumentKind::ManualSnippet,
                text: mtext,
                knobs: [knob.clone()].into_iter().collect(),
                source: "synthetic".into(),
            });

            // Anchor question for training/evaluation.
            let aid = format!("syna-c{c}-{i}");
            let atext = format!("synthetic anchor question {i} of cluster {c}");
            embeddings.insert(
                atext.clone(),
                EmbeddingVector::new(sample(&centers[c], None, &mut rng))
                    .expect("generated values are finite"),
            );
            cluster_of.insert(aid.clone(), c);
            questions.push(DebugQuestion {
                id: aid,
                text: atext,
                gold_knobs: [knob.clone()].into_iter().collect(),
                gold_values: Vec::new(),
            });
        }
    }

    SyntheticCorpus {
        documents,
        questions,
        truth: CorpusTruth {
            cluster_of,
            cluster_knobs,
            centers,
            offset_vector,
        },
        embeddings,
        dim,
    }
}

/// Spec for a seasonal series with injected spikes.
#[derive(Debug, Clone)]
pub struct SpikeSeriesSpec {
    pub length: usize,
    pub period: usize,
    pub amplitude: f64,
    pub trend_slope: f64,
    pub noise_sigma: f64,
    /// `(index, magnitude in sigmas)`; with zero noise the magnitude is
    /// taken in absolute units.
    pub spikes: Vec<(usize, f64)>,
    pub seed: u64,
}

impl Default for SpikeSeriesSpec {
    fn default() -> Self {
        SpikeSeriesSpec {
            length: 600,
            period: 24,
            amplitude: 10.0,
            trend_slope: 0.01,
            noise_sigma: 1.0,
            spikes: Vec::new(),
            seed: 0,
        }
    }
}

/// Generate `sin * amplitude + slope * t + gaussian(sigma)` plus the listed
/// spikes; returns the series and the injected indices in ascending order.
pub fn gen_series(spec: &SpikeSeriesSpec) -> (TelemetrySeries, Vec<usize>) {
    assert!(spec.period >= 2, "period must be at least 2");
    assert!(
        spec.spikes.iter().all(|&(i, _)| i < spec.length),
        "spike index out of range"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values: Vec<f64> = (0..spec.length)
        .map(|t| {
            let phase = std::f64::consts::TAU * t as f64 / spec.period as f64;
            spec.amplitude * phase.sin()
                + spec.trend_slope * t as f64
                + spec.noise_sigma * gaussian(&mut rng)
        })
        .collect();
    let unit = if spec.noise_sigma > 0.0 {
        spec.noise_sigma
    } else {
        1.0
    };
    for &(index, magnitude) in &spec.spikes {
        values[index] += magnitude * unit;
    }
    let mut spike_indices: Vec<usize> = spec.spikes.iter().map(|&(i, _)| i).collect();
    spike_indices.sort_unstable();
    spike_indices.dedup();
    let series = TelemetrySeries::new(
        "synthetic",
        (0..spec.length as i64).collect(),
        values,
        Some(spec.period),
    )
    .expect("generated series is well-formed");
    (series, spike_indices)
}

/// Cross-source retrieval quality: for each question anchor, rank the
/// manual-kind documents by L2 distance in the normalized space and score
/// the fraction of its gold knobs covered by the union of the top-k labels.
/// This is the brute-force oracle the index-backed path must agree with.
pub fn cross_source_recall_at_k(
    questions: &[DebugQuestion],
    docs: &[Document],
    embed: impl Fn(&str, SourceKind) -> EmbeddingVector,
    k: usize,
) -> f64 {
    let manuals: Vec<&Document> = docs
        .iter()
        .filter(|d| d.kind == DocumentKind::ManualSnippet)
        .collect();
    if manuals.is_empty() || questions.is_empty() {
        return 0.0;
    }
    let manual_vecs: Vec<EmbeddingVector> = manuals
        .iter()
        .map(|d| embed(&d.text, SourceKind::Manual).normalized())
        .collect();
    let mut total = 0.0;
    for q in questions {
        let qv = embed(&q.text, SourceKind::Question).normalized();
        let mut ranked: Vec<(f64, usize)> = manual_vecs
            .iter()
            .enumerate()
            .map(|(i, v)| (qv.euclidean(v), i))
            .collect();
        ranked.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then_with(|| manuals[a.1].id.cmp(&manuals[b.1].id))
        });
        let mut covered = 0usize;
        for knob in &q.gold_knobs {
            if ranked
                .iter()
                .take(k)
                .any(|&(_, i)| manuals[i].knobs.contains(knob))
            {
                covered += 1;
            }
        }
        total += covered as f64 / q.gold_knobs.len() as f64;
    }
    total / questions.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::stl_decompose;

    #[test]
    fn corpus_generation_is_deterministic() {
        let spec = SyntheticCorpusSpec::default();
        let a = gen_corpus(&spec);
        let b = gen_corpus(&spec);
        assert_eq!(a.documents, b.documents);
        assert_eq!(a.questions, b.questions);
        for doc in &a.documents {
            assert_eq!(
                a.embedding_of(&doc.text).unwrap(),
                b.embedding_of(&doc.text).unwrap()
            );
        }
    }

    #[test]
    fn offset_breaks_cross_source_retrieval() {
        let spec = SyntheticCorpusSpec::default(); // offset = 3x noise
        let corpus = gen_corpus(&spec);
        let embedder = corpus.embedder();
        let recall = cross_source_recall_at_k(
            &corpus.questions,
            &corpus.documents,
            |text, kind| embedder.embed(text, kind).unwrap(),
            5,
        );
        assert!(
            recall < 0.6,
            "expected the heterogeneity gap to break retrieval, recall@5 = {recall}"
        );
    }

    #[test]
    fn zero_offset_keeps_sources_aligned() {
        let spec = SyntheticCorpusSpec {
            offset: 0.0,
            ..SyntheticCorpusSpec::default()
        };
        let corpus = gen_corpus(&spec);
        let embedder = corpus.embedder();
        let cross = cross_source_recall_at_k(
            &corpus.questions,
            &corpus.documents,
            |text, kind| embedder.embed(text, kind).unwrap(),
            5,
        );
        // Within-source proxy: questions against question-kind documents.
        let question_docs: Vec<Document> = corpus
            .documents
            .iter()
            .filter(|d| d.kind == DocumentKind::HistoricalQuestion)
            .map(|d| Document {
                kind: DocumentKind::ManualSnippet,
                ..d.clone()
            })
            .collect();
        let within = cross_source_recall_at_k(
            &corpus.questions,
            &question_docs,
            |text, kind| embedder.embed(text, kind).unwrap(),
            5,
        );
        assert!(
            (cross - within).abs() < 0.05,
            "no gap to close: cross {cross} vs within {within}"
        );
        assert!(cross > 0.95);
    }

    #[test]
    fn corpus_labels_partition_by_cluster() {
        let corpus = gen_corpus(&SyntheticCorpusSpec::default());
        for doc in &corpus.documents {
            let cluster = corpus.truth.cluster_of[&doc.id];
            assert_eq!(doc.knobs.len(), 1);
            assert!(doc.knobs.contains(&corpus.truth.cluster_knobs[cluster]));
        }
    }

    #[test]
    fn series_generation_is_deterministic_and_tagged() {
        let spec = SpikeSeriesSpec {
            spikes: vec![(100, 12.0), (40, 15.0)],
            ..SpikeSeriesSpec::default()
        };
        let (a, spikes_a) = gen_series(&spec);
        let (b, _) = gen_series(&spec);
        assert_eq!(a, b);
        assert_eq!(spikes_a, vec![40, 100]);
    }

    #[test]
    fn noise_free_series_decomposes_to_tiny_residual() {
        let spec = SpikeSeriesSpec {
            length: 480,
            period: 24,
            amplitude: 10.0,
            trend_slope: 0.05,
            noise_sigma: 0.0,
            spikes: Vec::new(),
            seed: 3,
        };
        let (series, _) = gen_series(&spec);
        let d = stl_decompose(&series).unwrap();
        let max_resid = d.residual.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
        assert!(
            max_resid < 0.01 * spec.amplitude,
            "residual {max_resid} too large"
        );
    }
}
