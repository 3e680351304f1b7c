//! Evaluation: knob-diagnosis precision/recall/F1, document-retrieval
//! recall@k, success-rate bookkeeping for externally verified runs, and the
//! batch harness that drives the pipeline over a test set.
//!
//! Format failures score zero on every metric and are counted: a response
//! the parser cannot read is a failed case, not a dropped one.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DebugQuestion, Document};
use crate::reasoner::{DiagnosisResult, Pipeline};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold knob set is empty")]
    EmptyGold,
    #[error("empty input")]
    EmptyInput,
    #[error("verdict for unknown question `{question_id}`")]
    UnmatchedVerdict { question_id: String },
    #[error("malformed verdict file at line {line}: {message}")]
    MalformedVerdicts { line: usize, message: String },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-question evaluation record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub question_id: String,
    pub predicted_knobs: BTreeSet<String>,
    pub gold_knobs: BTreeSet<String>,
    pub retrieved_doc_ids: Vec<String>,
    pub failed: bool,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub retrieval_ms: u64,
    pub telemetry_ms: u64,
    pub reasoning_ms: u64,
}

/// Aggregated metrics over a test set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub failures: usize,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
    /// `(k, mean document-retrieval recall@k)` rows.
    pub recall_at_k: Vec<(usize, f64)>,
    pub mean_retrieval_ms: f64,
    pub mean_telemetry_ms: f64,
    pub mean_reasoning_ms: f64,
    pub mean_total_ms: f64,
}

/// Externally supplied verdict for one applied recommendation set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuccessVerdict {
    pub question_id: String,
    pub solved: bool,
    #[serde(default)]
    pub note: String,
}

/// `(precision, recall, f1)` of a predicted knob set against a nonempty
/// gold set. An empty prediction scores zero precision by convention.
pub fn precision_recall_f1(
    predicted: &BTreeSet<String>,
    gold: &BTreeSet<String>,
) -> Result<(f64, f64, f64), EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let correct = predicted.intersection(gold).count() as f64;
    let precision = if predicted.is_empty() {
        0.0
    } else {
        correct / predicted.len() as f64
    };
    let recall = correct / gold.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok((precision, recall, f1))
}

/// Fraction of `gold` covered by the union of knob labels over the top-`k`
/// of a ranked document list.
pub fn doc_retrieval_recall(
    retrieved: &[&Document],
    gold: &BTreeSet<String>,
    k: usize,
) -> Result<f64, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let mut union: BTreeSet<&str> = BTreeSet::new();
    for doc in retrieved.iter().take(k) {
        union.extend(doc.knobs.iter().map(String::as_str));
    }
    let covered = gold.iter().filter(|g| union.contains(g.as_str())).count();
    Ok(covered as f64 / gold.len() as f64)
}

/// Solved verdicts over total verdicts.
pub fn success_rate(verdicts: &[SuccessVerdict]) -> Result<f64, EvalError> {
    if verdicts.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let solved = verdicts.iter().filter(|v| v.solved).count();
    Ok(solved as f64 / verdicts.len() as f64)
}

/// The ks reported in retrieval-recall tables.
pub const RECALL_KS: [usize; 4] = [1, 3, 5, 10];

/// Run the pipeline over a test set in the text-only setting (no telemetry)
/// and aggregate. Per-question failures become zero-score records rather
/// than batch errors.
pub fn run_nl_eval(
    pipeline: &Pipeline,
    test_set: &[DebugQuestion],
) -> Result<(MetricsReport, Vec<EvalRecord>), EvalError> {
    if test_set.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let max_k = RECALL_KS.iter().copied().max().unwrap_or(0);
    let mut records = Vec::with_capacity(test_set.len());
    let mut recall_rows: Vec<Vec<f64>> = vec![Vec::new(); RECALL_KS.len()];

    for question in test_set {
        let diagnosis = pipeline.diagnose(question, None);

        // Retrieval quality is measured on a deeper ranked list than the
        // prompt uses, so recall@10 is observable at the default prompt k=5.
        let ranked_ids: Vec<String> = match pipeline.retrieve(&question.text, max_k) {
            Ok(hits) => hits.into_iter().map(|h| h.doc_id).collect(),
            Err(_) => Vec::new(),
        };
        let ranked_docs: Vec<&Document> = ranked_ids
            .iter()
            .filter_map(|id| pipeline.documents.get(id))
            .collect();
        for (row, &k) in recall_rows.iter_mut().zip(RECALL_KS.iter()) {
            row.push(doc_retrieval_recall(&ranked_docs, &question.gold_knobs, k)?);
        }

        let (precision, recall, f1) = if diagnosis.failed {
            (0.0, 0.0, 0.0)
        } else {
            precision_recall_f1(&diagnosis.predicted_knobs, &question.gold_knobs)?
        };
        records.push(EvalRecord {
            question_id: question.id.clone(),
            predicted_knobs: diagnosis.predicted_knobs,
            gold_knobs: question.gold_knobs.clone(),
            retrieved_doc_ids: ranked_ids,
            failed: diagnosis.failed,
            precision,
            recall,
            f1,
            retrieval_ms: diagnosis.retrieval_ms,
            telemetry_ms: diagnosis.telemetry_ms,
            reasoning_ms: diagnosis.reasoning_ms,
        });
    }

    let n = records.len();
    let mean =
        |f: &dyn Fn(&EvalRecord) -> f64| -> f64 { records.iter().map(f).sum::<f64>() / n as f64 };
    let report = MetricsReport {
        n,
        failures: records.iter().filter(|r| r.failed).count(),
        mean_precision: mean(&|r| r.precision),
        mean_recall: mean(&|r| r.recall),
        mean_f1: mean(&|r| r.f1),
        recall_at_k: RECALL_KS
            .iter()
            .zip(recall_rows.iter())
            .map(|(&k, row)| (k, row.iter().sum::<f64>() / row.len() as f64))
            .collect(),
        mean_retrieval_ms: mean(&|r| r.retrieval_ms as f64),
        mean_telemetry_ms: mean(&|r| r.telemetry_ms as f64),
        mean_reasoning_ms: mean(&|r| r.reasoning_ms as f64),
        mean_total_ms: mean(&|r| (r.retrieval_ms + r.telemetry_ms + r.reasoning_ms) as f64),
    };
    Ok((report, records))
}

/// Load a verdict file: one `{"question_id", "solved", "note"}` object per
/// line.
pub fn load_verdicts(path: &Path) -> Result<Vec<SuccessVerdict>, EvalError> {
    let text = std::fs::read_to_string(path)?;
    let mut verdicts = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: SuccessVerdict =
            serde_json::from_str(line).map_err(|e| EvalError::MalformedVerdicts {
                line: idx + 1,
                message: e.to_string(),
            })?;
        verdicts.push(v);
    }
    Ok(verdicts)
}

/// Runnable-setting summary: the verdicts joined against diagnosis results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunnableReport {
    pub n: usize,
    pub success_rate: f64,
    /// Mean number of knobs recommended per diagnosed question; a diagnostic
    /// for how tightly the pipeline scopes its fixes.
    pub mean_recommended_knobs: f64,
}

/// Join externally authored verdicts to diagnosis results by question id.
/// Every verdict must match a result.
pub fn record_runnable(
    results: &[DiagnosisResult],
    verdicts: &[SuccessVerdict],
) -> Result<RunnableReport, EvalError> {
    if verdicts.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    for verdict in verdicts {
        if !results.iter().any(|r| r.question_id == verdict.question_id) {
            return Err(EvalError::UnmatchedVerdict {
                question_id: verdict.question_id.clone(),
            });
        }
    }
    let rate = success_rate(verdicts)?;
    let mean_recommended = results
        .iter()
        .map(|r| r.recommendations.len() as f64)
        .sum::<f64>()
        / results.len().max(1) as f64;
    Ok(RunnableReport {
        n: verdicts.len(),
        success_rate: rate,
        mean_recommended_knobs: mean_recommended,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn perfect_prediction_scores_ones() {
        let s = set(&["a", "b"]);
        assert_eq!(precision_recall_f1(&s, &s).unwrap(), (1.0, 1.0, 1.0));
    }

    #[test]
    fn disjoint_prediction_scores_zeros() {
        let p = set(&["x", "y"]);
        let g = set(&["a", "b"]);
        assert_eq!(precision_recall_f1(&p, &g).unwrap(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn half_right_half_wrong() {
        let p = set(&["a", "b"]);
        let g = set(&["a", "c"]);
        assert_eq!(precision_recall_f1(&p, &g).unwrap(), (0.5, 0.5, 0.5));
    }

    #[test]
    fn empty_prediction_scores_zero_precision() {
        let p = set(&[]);
        let g = set(&["a"]);
        assert_eq!(precision_recall_f1(&p, &g).unwrap(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_gold_is_an_error() {
        assert!(matches!(
            precision_recall_f1(&set(&["a"]), &set(&[])),
            Err(EvalError::EmptyGold)
        ));
    }

    fn doc_with(knobs: &[&str]) -> Document {
        Document {
            id: format!("d-{}", knobs.join("-")),
            kind: crate::corpus::DocumentKind::ManualSnippet,
            text: "t".into(),
            knobs: set(knobs),
            source: "s".into(),
        }
    }

    #[test]
    fn retrieval_recall_covers_half() {
        let docs = [doc_with(&["a"]), doc_with(&["x"])];
        let refs: Vec<&Document> = docs.iter().collect();
        let recall = doc_retrieval_recall(&refs, &set(&["a", "b"]), 2).unwrap();
        assert_eq!(recall, 0.5);
    }

    #[test]
    fn retrieval_recall_k_zero_is_zero() {
        let docs = [doc_with(&["a"])];
        let refs: Vec<&Document> = docs.iter().collect();
        assert_eq!(doc_retrieval_recall(&refs, &set(&["a"]), 0).unwrap(), 0.0);
    }

    #[test]
    fn retrieval_recall_full_coverage_is_one() {
        let docs = [doc_with(&["a", "b", "c"])];
        let refs: Vec<&Document> = docs.iter().collect();
        assert_eq!(
            doc_retrieval_recall(&refs, &set(&["a", "b"]), 1).unwrap(),
            1.0
        );
    }

    #[test]
    fn success_rate_basics() {
        let v = |id: &str, solved: bool| SuccessVerdict {
            question_id: id.into(),
            solved,
            note: String::new(),
        };
        assert_eq!(success_rate(&[v("a", true), v("b", false)]).unwrap(), 0.5);
        assert_eq!(success_rate(&[v("a", true), v("b", true)]).unwrap(), 1.0);
        let seventy_nine: Vec<SuccessVerdict> =
            (0..100).map(|i| v(&format!("q{i}"), i < 79)).collect();
        assert_eq!(success_rate(&seventy_nine).unwrap(), 0.79);
        assert!(matches!(success_rate(&[]), Err(EvalError::EmptyInput)));
    }

    fn result_with(id: &str, recommended: usize) -> DiagnosisResult {
        let mut value = serde_json::json!({
            "question_id": id,
            "predicted_knobs": [],
            "recommendations": [],
            "retrieved_doc_ids": [],
            "narratives": [],
            "hallucinated_knobs": [],
            "rejected_values": [],
            "missing_values": [],
            "phase1_response": null,
            "phase2_response": null,
            "failed": false,
            "error": null,
            "retrieval_ms": 0,
            "telemetry_ms": 0,
            "reasoning_ms": 0,
        });
        let recs: Vec<serde_json::Value> = (0..recommended)
            .map(|i| {
                serde_json::json!({
                    "knob": format!("k{i}"),
                    "value": {"raw": "1", "parsed": {"Integer": 1}},
                })
            })
            .collect();
        value["recommendations"] = serde_json::Value::Array(recs);
        serde_json::from_value(value).unwrap()
    }

    #[test]
    fn runnable_join_computes_rate_and_mean_knobs() {
        let results = vec![
            result_with("a", 2),
            result_with("b", 4),
            result_with("c", 0),
        ];
        let verdicts = vec![
            SuccessVerdict {
                question_id: "a".into(),
                solved: true,
                note: String::new(),
            },
            SuccessVerdict {
                question_id: "b".into(),
                solved: true,
                note: String::new(),
            },
            SuccessVerdict {
                question_id: "c".into(),
                solved: false,
                note: String::new(),
            },
        ];
        let report = record_runnable(&results, &verdicts).unwrap();
        assert!((report.success_rate - 2.0 / 3.0).abs() < 1e-12);
        assert!((report.mean_recommended_knobs - 2.0).abs() < 1e-12);
    }

    #[test]
    fn verdict_for_unknown_question_is_rejected() {
        let results = vec![result_with("a", 0)];
        let verdicts = vec![SuccessVerdict {
            question_id: "ghost".into(),
            solved: true,
            note: String::new(),
        }];
        assert!(matches!(
            record_runnable(&results, &verdicts),
            Err(EvalError::UnmatchedVerdict { .. })
        ));
    }

    #[test]
    fn empty_verdicts_error() {
        assert!(matches!(
            record_runnable(&[], &[]),
            Err(EvalError::EmptyInput)
        ));
    }

    proptest! {
        #[test]
        fn f1_bounds_hold(
            pred in proptest::collection::btree_set("[a-e]", 0..5),
            gold in proptest::collection::btree_set("[a-e]", 1..5),
        ) {
            let (p, r, f1) = precision_recall_f1(&pred, &gold).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert!((0.0..=1.0).contains(&f1));
            prop_assert!(f1 <= 2.0 * p + 1e-12);
            prop_assert!(f1 <= 2.0 * r + 1e-12);
            let exact = (f1 - 1.0).abs() < 1e-12;
            prop_assert_eq!(exact, pred == gold);
        }

        #[test]
        fn recall_at_k_is_monotone(
            labels in proptest::collection::vec(
                proptest::collection::btree_set("[a-f]", 0..3), 1..12),
            gold in proptest::collection::btree_set("[a-f]", 1..4),
        ) {
            let docs: Vec<Document> = labels
                .iter()
                .enumerate()
                .map(|(i, ks)| Document {
                    id: format!("d{i}"),
                    kind: crate::corpus::DocumentKind::ManualSnippet,
                    text: "t".into(),
                    knobs: ks.clone(),
                    source: "s".into(),
                })
                .collect();
            let refs: Vec<&Document> = docs.iter().collect();
            let mut last = 0.0;
            for k in 0..=refs.len() {
                let r = doc_retrieval_recall(&refs, &gold, k).unwrap();
                prop_assert!(r + 1e-12 >= last);
                last = r;
            }
        }
    }
}
