//! Contrastive loss over an anchor, one positive, and a set of negatives.
//!
//! Similarity is the negative squared Euclidean distance scaled by the
//! temperature; the loss is the softmax cross-entropy of picking the
//! positive, computed with a stable log-sum-exp. Minimizing it pulls the
//! positive toward the anchor and pushes negatives away.

use super::{EmbedError, EmbeddingVector};

/// Loss value plus analytic gradients with respect to every input vector.
#[derive(Debug, Clone)]
pub struct InfoNceGrads {
    pub loss: f64,
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

fn check_inputs(
    anchor: &EmbeddingVector,
    positive: &EmbeddingVector,
    negatives: &[EmbeddingVector],
    tau: f64,
) -> Result<(), EmbedError> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(EmbedError::NonpositiveTau { tau });
    }
    if negatives.is_empty() {
        return Err(EmbedError::EmptyNegatives);
    }
    let dim = anchor.dim();
    for v in std::iter::once(positive).chain(negatives.iter()) {
        if v.dim() != dim {
            return Err(EmbedError::DimensionMismatch {
                expected: dim,
                got: v.dim(),
            });
        }
    }
    Ok(())
}

fn score(a: &EmbeddingVector, b: &EmbeddingVector, tau: f64) -> f64 {
    let d2: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    -d2 / tau
}

/// `-log( exp(s+) / (exp(s+) + sum_j exp(s-_j)) )`, always nonnegative.
pub fn info_nce_loss(
    anchor: &EmbeddingVector,
    positive: &EmbeddingVector,
    negatives: &[EmbeddingVector],
    tau: f64,
) -> Result<f64, EmbedError> {
    check_inputs(anchor, positive, negatives, tau)?;
    let s_pos = score(anchor, positive, tau);
    let mut scores = Vec::with_capacity(negatives.len() + 1);
    scores.push(s_pos);
    for n in negatives {
        scores.push(score(anchor, n, tau));
    }
    let max = scores.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s));
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    Ok(lse - s_pos)
}

/// Loss plus analytic gradients. With softmax probabilities `p` over
/// `[positive, negatives...]`, the gradient with respect to each score is
/// `p - onehot(positive)`, which chains into the vectors through
/// `d(score)/d(b) = 2 (a - b) / tau` and its negation for the anchor side.
pub fn info_nce_with_grads(
    anchor: &EmbeddingVector,
    positive: &EmbeddingVector,
    negatives: &[EmbeddingVector],
    tau: f64,
) -> Result<InfoNceGrads, EmbedError> {
    check_inputs(anchor, positive, negatives, tau)?;
    let dim = anchor.dim();
    let s_pos = score(anchor, positive, tau);
    let neg_scores: Vec<f64> = negatives.iter().map(|n| score(anchor, n, tau)).collect();

    let max = neg_scores.iter().fold(s_pos, |m, &s| m.max(s));
    let exp_pos = (s_pos - max).exp();
    let exp_negs: Vec<f64> = neg_scores.iter().map(|s| (s - max).exp()).collect();
    let denom = exp_pos + exp_negs.iter().sum::<f64>();
    let loss = denom.ln() + max - s_pos;

    let p_pos = exp_pos / denom;
    let g_pos_score = p_pos - 1.0;

    let mut grad_anchor = vec![0.0; dim];
    let mut grad_positive = vec![0.0; dim];
    for i in 0..dim {
        let diff = anchor.as_slice()[i] - positive.as_slice()[i];
        // d(s+)/d(anchor_i) = -2 diff / tau; d(s+)/d(positive_i) = 2 diff / tau.
        grad_anchor[i] += g_pos_score * (-2.0 * diff / tau);
        grad_positive[i] = g_pos_score * (2.0 * diff / tau);
    }
    let mut grad_negatives = Vec::with_capacity(negatives.len());
    for (n, exp_n) in negatives.iter().zip(exp_negs.iter()) {
        let p_n = exp_n / denom;
        let mut g = vec![0.0; dim];
        for i in 0..dim {
            let diff = anchor.as_slice()[i] - n.as_slice()[i];
            grad_anchor[i] += p_n * (-2.0 * diff / tau);
            g[i] = p_n * (2.0 * diff / tau);
        }
        grad_negatives.push(g);
    }

    Ok(InfoNceGrads {
        loss,
        anchor: grad_anchor,
        positive: grad_positive,
        negatives: grad_negatives,
    })
}
