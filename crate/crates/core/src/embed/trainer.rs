//! Curriculum trainer for the alignment network.
//!
//! Manual-manual triples train first to settle the manual side into the
//! question space, then question-question and question-manual follow. Plain
//! stochastic gradient descent, deterministic shuffling under the seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    info_nce_with_grads, AlignmentNetwork, EmbedError, EmbeddingVector, PairType, SourceKind,
    TrainingTriple,
};

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub tau: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            learning_rate: 1e-2,
            tau: 0.1,
            seed: 0,
        }
    }
}

/// Mean loss per epoch for one curriculum phase.
#[derive(Debug, Clone)]
pub struct PhaseTrace {
    pub pair_type: PairType,
    pub epoch_mean_loss: Vec<f64>,
}

/// The full training trace, one phase per pair type that had triples.
#[derive(Debug, Clone, Default)]
pub struct LossTrace {
    pub phases: Vec<PhaseTrace>,
}

impl LossTrace {
    pub fn first_epoch_loss(&self) -> Option<f64> {
        self.phases
            .first()
            .and_then(|p| p.epoch_mean_loss.first())
            .copied()
    }

    pub fn last_epoch_loss(&self) -> Option<f64> {
        self.phases
            .last()
            .and_then(|p| p.epoch_mean_loss.last())
            .copied()
    }
}

/// Train `net` in place on `triples` and return the loss trace.
///
/// `epochs == 0` leaves the network untouched. Identical seeds and inputs
/// produce bitwise-identical parameters.
pub fn train_alignment(
    net: &mut AlignmentNetwork,
    triples: &[TrainingTriple],
    config: &TrainConfig,
) -> Result<LossTrace, EmbedError> {
    if triples.is_empty() {
        return Err(EmbedError::EmptyTriples);
    }
    for t in triples {
        for v in [&t.anchor, &t.positive]
            .into_iter()
            .chain(t.negatives.iter().map(|(_, v)| v))
        {
            if v.dim() != net.dim() {
                return Err(EmbedError::DimensionMismatch {
                    expected: net.dim(),
                    got: v.dim(),
                });
            }
        }
    }

    let mut trace = LossTrace::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    for pair_type in PairType::ALL {
        let mut phase: Vec<&TrainingTriple> = triples
            .iter()
            .filter(|t| t.pair_type == pair_type)
            .collect();
        if phase.is_empty() {
            continue;
        }
        let mut epoch_mean_loss = Vec::with_capacity(config.epochs);
        for _ in 0..config.epochs {
            phase.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            for triple in &phase {
                loss_sum += sgd_step(net, triple, config)?;
            }
            epoch_mean_loss.push(loss_sum / phase.len() as f64);
        }
        trace.phases.push(PhaseTrace {
            pair_type,
            epoch_mean_loss,
        });
    }
    Ok(trace)
}

/// One forward/backward/update pass over a triple; returns its loss.
fn sgd_step(
    net: &mut AlignmentNetwork,
    triple: &TrainingTriple,
    config: &TrainConfig,
) -> Result<f64, EmbedError> {
    let anchor_trace = net.forward_trace(triple.anchor.as_slice(), SourceKind::Question);
    let positive_trace = net.forward_trace(triple.positive.as_slice(), triple.positive_kind);
    let negative_traces: Vec<_> = triple
        .negatives
        .iter()
        .map(|(_, v)| net.forward_trace(v.as_slice(), triple.negative_kind))
        .collect();

    let anchor_out = EmbeddingVector::new(anchor_trace.output.clone())?;
    let positive_out = EmbeddingVector::new(positive_trace.output.clone())?;
    let negative_outs: Vec<EmbeddingVector> = negative_traces
        .iter()
        .map(|t| EmbeddingVector::new(t.output.clone()))
        .collect::<Result<_, _>>()?;

    let grads = info_nce_with_grads(&anchor_out, &positive_out, &negative_outs, config.tau)?;

    let mut question_grads = net.zeroed_grads(SourceKind::Question);
    let mut manual_grads = net.zeroed_grads(SourceKind::Manual);
    // Anchor always routes through the question stack.
    net.backward(
        SourceKind::Question,
        &anchor_trace,
        &grads.anchor,
        &mut question_grads,
    );
    match triple.positive_kind {
        SourceKind::Question => {
            net.backward(
                SourceKind::Question,
                &positive_trace,
                &grads.positive,
                &mut question_grads,
            );
        }
        SourceKind::Manual => {
            net.backward(
                SourceKind::Manual,
                &positive_trace,
                &grads.positive,
                &mut manual_grads,
            );
        }
    }
    for (neg_trace, neg_grad) in negative_traces.iter().zip(grads.negatives.iter()) {
        match triple.negative_kind {
            SourceKind::Question => {
                net.backward(
                    SourceKind::Question,
                    neg_trace,
                    neg_grad,
                    &mut question_grads,
                );
            }
            SourceKind::Manual => {
                net.backward(SourceKind::Manual, neg_trace, neg_grad, &mut manual_grads);
            }
        }
    }
    net.sgd_step(SourceKind::Question, &question_grads, config.learning_rate);
    net.sgd_step(SourceKind::Manual, &manual_grads, config.learning_rate);
    Ok(grads.loss)
}
