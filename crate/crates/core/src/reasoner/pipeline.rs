//! The online diagnosis flow: retrieve, analyze telemetry, assemble the
//! prompt, then run the two phases against the chat backend.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{DebugQuestion, Document};
use crate::embed::{AlignmentNetwork, BaseEmbedder, SourceKind};
use crate::knobspace::{parse_recommendations, KnobRegistry, Recommendation, RejectedEntry};
use crate::telemetry::{analyze_dir, select_relevant, AnalysisConfig, MetricCatalog};
use crate::vectorstore::{SearchHit, VectorIndex};

use super::prompt::{assemble_prompt, PromptBundle};
use super::{ChatBackend, ChatRequest, PromptStrategy, ReasonError};

/// Outcome of the knob-identification phase.
#[derive(Debug, Clone)]
pub struct Phase1Outcome {
    pub knobs: BTreeSet<String>,
    /// Names the model produced that exist in no registry; dropped from the
    /// prediction but kept for the audit trail.
    pub hallucinated: Vec<String>,
    pub raw_response: String,
    pub latency_ms: u64,
}

/// Outcome of the value-recommendation phase.
#[derive(Debug, Clone)]
pub struct Phase2Outcome {
    pub recommendations: Vec<Recommendation>,
    pub rejected: Vec<RejectedEntry>,
    /// Requested knobs the response did not cover.
    pub missing: Vec<String>,
    pub raw_response: String,
    pub latency_ms: u64,
}

/// Parse a `[a, b, c]` knob list out of a model response.
pub fn parse_knob_list(text: &str) -> Result<Vec<String>, ReasonError> {
    let open = text.find('[').ok_or(ReasonError::FormatFailure)?;
    let close = text[open..].find(']').ok_or(ReasonError::FormatFailure)? + open;
    let body = &text[open + 1..close];
    Ok(body
        .split(',')
        .map(|t| t.trim().trim_matches(|c| c == '"' || c == '\'' || c == '`'))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect())
}

/// Run phase 1: prompt for a bracketed knob list and filter it to registry
/// members.
pub fn phase1_identify_knobs(
    bundle: &PromptBundle,
    registry: &KnobRegistry,
    backend: &dyn ChatBackend,
    model: &str,
) -> Result<Phase1Outcome, ReasonError> {
    let request = ChatRequest::user(model, bundle.render_phase1());
    let started = Instant::now();
    let response = backend.complete(&request)?;
    let latency_ms = response
        .latency_ms
        .max(started.elapsed().as_millis() as u64);
    let names = parse_knob_list(&response.text)?;
    let mut knobs = BTreeSet::new();
    let mut hallucinated = Vec::new();
    for name in names {
        if registry.contains(&name) {
            knobs.insert(name);
        } else {
            hallucinated.push(name);
        }
    }
    Ok(Phase1Outcome {
        knobs,
        hallucinated,
        raw_response: response.text,
        latency_ms,
    })
}

/// Run phase 2: prompt for a `{knob: value}` dictionary over `knobs` and
/// validate each entry. Out-of-domain and unknown entries are carried
/// per-entry; knobs left without a value are reported in `missing`.
pub fn phase2_recommend_values(
    bundle: &PromptBundle,
    knobs: &BTreeSet<String>,
    registry: &KnobRegistry,
    backend: &dyn ChatBackend,
    model: &str,
) -> Result<Phase2Outcome, ReasonError> {
    let request = ChatRequest::user(model, bundle.render_phase2(knobs));
    let started = Instant::now();
    let response = backend.complete(&request)?;
    let latency_ms = response
        .latency_ms
        .max(started.elapsed().as_millis() as u64);
    let parsed =
        parse_recommendations(&response.text, registry).map_err(|_| ReasonError::FormatFailure)?;
    let covered: BTreeSet<&str> = parsed
        .accepted
        .iter()
        .map(|r| r.knob.as_str())
        .chain(parsed.rejected.iter().map(|r| r.knob.as_str()))
        .collect();
    let missing: Vec<String> = knobs
        .iter()
        .filter(|k| !covered.contains(k.as_str()))
        .cloned()
        .collect();
    Ok(Phase2Outcome {
        recommendations: parsed.accepted,
        rejected: parsed.rejected,
        missing,
        raw_response: response.text,
        latency_ms,
    })
}

/// Everything the pipeline learned about one question, including the audit
/// trail evaluation needs. A failure in either phase sets `failed` and
/// clears the predictions rather than aborting the batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosisResult {
    pub question_id: String,
    pub predicted_knobs: BTreeSet<String>,
    pub recommendations: Vec<Recommendation>,
    pub retrieved_doc_ids: Vec<String>,
    pub narratives: Vec<String>,
    pub hallucinated_knobs: Vec<String>,
    pub rejected_values: Vec<RejectedEntry>,
    pub missing_values: Vec<String>,
    pub phase1_response: Option<String>,
    pub phase2_response: Option<String>,
    pub failed: bool,
    pub error: Option<String>,
    pub retrieval_ms: u64,
    pub telemetry_ms: u64,
    pub reasoning_ms: u64,
}

impl DiagnosisResult {
    fn empty(question_id: &str) -> Self {
        DiagnosisResult {
            question_id: question_id.to_string(),
            predicted_knobs: BTreeSet::new(),
            recommendations: Vec::new(),
            retrieved_doc_ids: Vec::new(),
            narratives: Vec::new(),
            hallucinated_knobs: Vec::new(),
            rejected_values: Vec::new(),
            missing_values: Vec::new(),
            phase1_response: None,
            phase2_response: None,
            failed: false,
            error: None,
            retrieval_ms: 0,
            telemetry_ms: 0,
            reasoning_ms: 0,
        }
    }

    pub fn total_ms(&self) -> u64 {
        self.retrieval_ms + self.telemetry_ms + self.reasoning_ms
    }

    fn fail(mut self, error: &ReasonError) -> Self {
        self.failed = true;
        self.error = Some(error.to_string());
        self.predicted_knobs.clear();
        self.recommendations.clear();
        self
    }
}

/// Knobs of the online flow; defaults match the values used throughout the
/// test suites.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Documents retrieved into the prompt.
    pub retrieval_k: usize,
    /// Narratives kept after relevance selection.
    pub telemetry_top_k: usize,
    pub alpha: f64,
    pub normal_percentile: f64,
    pub max_anomalies: Option<usize>,
    pub strategy: PromptStrategy,
    pub model: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            retrieval_k: 5,
            telemetry_top_k: 3,
            alpha: 0.05,
            normal_percentile: 5.0,
            max_anomalies: None,
            strategy: PromptStrategy::Rag,
            model: "mock".to_string(),
        }
    }
}

/// The wired online pipeline. All components are immutable once built, so a
/// pipeline is safe to share across threads; distinct questions may be
/// diagnosed concurrently.
pub struct Pipeline {
    pub registry: KnobRegistry,
    pub documents: BTreeMap<String, Document>,
    pub index: VectorIndex,
    pub net: AlignmentNetwork,
    pub embedder: Arc<dyn BaseEmbedder>,
    pub chat: Arc<dyn ChatBackend>,
    pub catalog: MetricCatalog,
    pub config: PipelineConfig,
}

impl Pipeline {
    /// Embed, align and search: the top-k documents for a question text.
    pub fn retrieve(&self, question_text: &str, k: usize) -> Result<Vec<SearchHit>, ReasonError> {
        let base = self.embedder.embed(question_text, SourceKind::Question)?;
        let aligned = self.net.align(&base, SourceKind::Question)?;
        Ok(self.index.search_topk(&aligned, k)?)
    }

    /// Full two-phase diagnosis of one question. Telemetry analysis runs
    /// only when a directory is supplied.
    pub fn diagnose(
        &self,
        question: &DebugQuestion,
        telemetry_dir: Option<&Path>,
    ) -> DiagnosisResult {
        let mut result = DiagnosisResult::empty(&question.id);

        // Step 1: document retrieval.
        let retrieval_started = Instant::now();
        let hits = match self.retrieve(&question.text, self.config.retrieval_k) {
            Ok(hits) => hits,
            Err(e) => return result.fail(&e),
        };
        result.retrieved_doc_ids = hits.iter().map(|h| h.doc_id.clone()).collect();
        let docs: Vec<&Document> = hits
            .iter()
            .filter_map(|h| self.documents.get(&h.doc_id))
            .collect();
        result.retrieval_ms = retrieval_started.elapsed().as_millis() as u64;

        // Step 2: telemetry analysis, when available.
        let telemetry_started = Instant::now();
        let narratives = match telemetry_dir {
            Some(dir) => {
                let analysis = AnalysisConfig {
                    alpha: self.config.alpha,
                    max_anomalies: self.config.max_anomalies,
                    normal_percentile: self.config.normal_percentile,
                };
                match analyze_dir(dir, &self.catalog, &analysis) {
                    Ok((all, _failures)) => select_relevant(
                        &all,
                        &question.text,
                        self.config.telemetry_top_k,
                        self.embedder.as_ref(),
                    ),
                    Err(e) => {
                        return result.fail(&ReasonError::BackendUnavailable(format!(
                            "telemetry analysis failed: {e}"
                        )))
                    }
                }
            }
            None => Vec::new(),
        };
        result.narratives = narratives.iter().map(|n| n.text.clone()).collect();
        result.telemetry_ms = telemetry_started.elapsed().as_millis() as u64;

        // Step 3: two-phase reasoning.
        let bundle = assemble_prompt(
            &question.text,
            &docs,
            &narratives,
            self.config.strategy,
            &self.registry,
        );
        let phase1 = match phase1_identify_knobs(
            &bundle,
            &self.registry,
            self.chat.as_ref(),
            &self.config.model,
        ) {
            Ok(outcome) => outcome,
            Err(e) => return result.fail(&e),
        };
        result.reasoning_ms += phase1.latency_ms;
        result.hallucinated_knobs = phase1.hallucinated;
        result.phase1_response = Some(phase1.raw_response.clone());
        result.predicted_knobs = phase1.knobs.clone();

        if !phase1.knobs.is_empty() {
            let phase2 = match phase2_recommend_values(
                &bundle,
                &phase1.knobs,
                &self.registry,
                self.chat.as_ref(),
                &self.config.model,
            ) {
                Ok(outcome) => outcome,
                Err(e) => return result.fail(&e),
            };
            result.reasoning_ms += phase2.latency_ms;
            result.phase2_response = Some(phase2.raw_response.clone());
            result.rejected_values = phase2.rejected;
            result.missing_values = phase2.missing;
            // Recommendations outside the identified knob set are audit
            // noise, never predictions.
            result.recommendations = phase2
                .recommendations
                .into_iter()
                .filter(|r| result.predicted_knobs.contains(&r.knob))
                .collect();
        }
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DocumentKind;
    use crate::embed::HashEmbedder;
    use crate::knobspace::parse_registry;
    use crate::reasoner::MockChatBackend;
    use crate::vectorstore::{build_index, IndexEntry};

    fn registry() -> KnobRegistry {
        parse_registry(
            "\
autocommit | boolean | | 1 | autocommit mode | \n\
unique_checks | boolean | | 1 | uniqueness checks | \n\
foreign_key_checks | boolean | | 1 | fk checks | \n\
innodb_buffer_pool_size | integer | 5M..4G | 128M | buffer pool | \n",
            "mysql-test",
        )
        .unwrap()
    }

    #[test]
    fn knob_list_parsing() {
        assert_eq!(
            parse_knob_list("[autocommit, unique_checks]").unwrap(),
            vec!["autocommit".to_string(), "unique_checks".to_string()]
        );
        assert_eq!(parse_knob_list("[]").unwrap(), Vec::<String>::new());
        assert!(matches!(
            parse_knob_list("I would tune the buffer pool."),
            Err(ReasonError::FormatFailure)
        ));
    }

    fn bundle(reg: &KnobRegistry) -> PromptBundle {
        assemble_prompt("why slow", &[], &[], PromptStrategy::Rag, reg)
    }

    #[test]
    fn phase1_parses_and_filters_to_registry() {
        let reg = registry();
        let b = bundle(&reg);
        let mut mock = MockChatBackend::new();
        mock.script(
            &b.render_phase1(),
            "[autocommit, unique_checks, made_up_setting]",
        );
        let outcome = phase1_identify_knobs(&b, &reg, &mock, "mock").unwrap();
        let expected: BTreeSet<String> =
            ["autocommit".to_string(), "unique_checks".to_string()].into();
        assert_eq!(outcome.knobs, expected);
        assert_eq!(outcome.hallucinated, vec!["made_up_setting".to_string()]);
    }

    #[test]
    fn phase1_empty_list_is_valid() {
        let reg = registry();
        let b = bundle(&reg);
        let mut mock = MockChatBackend::new();
        mock.script(&b.render_phase1(), "[]");
        let outcome = phase1_identify_knobs(&b, &reg, &mock, "mock").unwrap();
        assert!(outcome.knobs.is_empty());
    }

    #[test]
    fn phase1_prose_is_a_format_failure() {
        let reg = registry();
        let b = bundle(&reg);
        let mut mock = MockChatBackend::new();
        mock.script(
            &b.render_phase1(),
            "You should probably look at your indexes first.",
        );
        assert!(matches!(
            phase1_identify_knobs(&b, &reg, &mock, "mock"),
            Err(ReasonError::FormatFailure)
        ));
    }

    #[test]
    fn phase2_parses_values_and_reports_missing() {
        let reg = registry();
        let b = bundle(&reg);
        let knobs: BTreeSet<String> =
            ["autocommit".to_string(), "unique_checks".to_string()].into();
        let mut mock = MockChatBackend::new();
        mock.script(&b.render_phase2(&knobs), "{autocommit: 0}");
        let outcome = phase2_recommend_values(&b, &knobs, &reg, &mock, "mock").unwrap();
        assert_eq!(outcome.recommendations.len(), 1);
        assert_eq!(outcome.recommendations[0].knob, "autocommit");
        assert_eq!(outcome.missing, vec!["unique_checks".to_string()]);
    }

    #[test]
    fn phase2_malformed_dictionary_fails() {
        let reg = registry();
        let b = bundle(&reg);
        let knobs: BTreeSet<String> = ["autocommit".to_string()].into();
        let mut mock = MockChatBackend::new();
        mock.script(&b.render_phase2(&knobs), "set it to zero, trust me");
        assert!(matches!(
            phase2_recommend_values(&b, &knobs, &reg, &mock, "mock"),
            Err(ReasonError::FormatFailure)
        ));
    }

    fn toy_pipeline(chat: MockChatBackend) -> Pipeline {
        let _reg = registry();
        let embedder = Arc::new(HashEmbedder::new(64));
        let docs = vec![
            Document {
                id: "h1".into(),
                kind: DocumentKind::HistoricalQuestion,
                text: "insert slow disable foreign_key_checks and unique_checks".into(),
                knobs: [
                    "foreign_key_checks".to_string(),
                    "unique_checks".to_string(),
                ]
                .into_iter()
                .collect(),
                source: "so".into(),
            },
            Document {
                id: "m1".into(),
                kind: DocumentKind::ManualSnippet,
                text: "turn off autocommit when importing data".into(),
                knobs: ["autocommit".to_string()].into_iter().collect(),
                source: "manual".into(),
            },
        ];
        let net = AlignmentNetwork::new(64, 2, 0);
        let entries: Vec<IndexEntry> = docs
            .iter()
            .map(|d| IndexEntry {
                doc_id: d.id.clone(),
                kind: d.kind,
                vector: net
                    .align(
                        &embedder.embed(&d.text, SourceKind::from(d.kind)).unwrap(),
                        SourceKind::from(d.kind),
                    )
                    .unwrap(),
            })
            .collect();
        Pipeline {
            registry: registry(),
            documents: docs.into_iter().map(|d| (d.id.clone(), d)).collect(),
            index: build_index(entries).unwrap(),
            net,
            embedder,
            chat: Arc::new(chat),
            catalog: MetricCatalog::new(),
            config: PipelineConfig::default(),
        }
    }

    fn question() -> DebugQuestion {
        DebugQuestion {
            id: "q".into(),
            text: "inserting rows is very slow".into(),
            gold_knobs: ["unique_checks".to_string()].into_iter().collect(),
            gold_values: Vec::new(),
        }
    }

    #[test]
    fn diagnose_without_telemetry_completes() {
        // Script both phases against the exact prompts the pipeline renders.
        let scripted = toy_pipeline(MockChatBackend::new());
        let q = question();
        let hits = scripted.retrieve(&q.text, 5).unwrap();
        let docs: Vec<&Document> = hits
            .iter()
            .filter_map(|h| scripted.documents.get(&h.doc_id))
            .collect();
        let b = assemble_prompt(&q.text, &docs, &[], PromptStrategy::Rag, &scripted.registry);
        let mut mock = MockChatBackend::new();
        mock.script(&b.render_phase1(), "[unique_checks, foreign_key_checks]");
        let knobs: BTreeSet<String> = [
            "foreign_key_checks".to_string(),
            "unique_checks".to_string(),
        ]
        .into();
        mock.script(
            &b.render_phase2(&knobs),
            "{unique_checks: 0, foreign_key_checks: 0}",
        );

        let pipeline = toy_pipeline(mock);
        let result = pipeline.diagnose(&q, None);
        assert!(!result.failed, "error: {:?}", result.error);
        assert!(result.narratives.is_empty());
        assert_eq!(result.predicted_knobs, knobs);
        assert_eq!(result.recommendations.len(), 2);
        for r in &result.recommendations {
            assert!(result.predicted_knobs.contains(&r.knob));
        }
    }

    #[test]
    fn phase1_failure_sets_the_flag_and_clears_predictions() {
        let scripted = toy_pipeline(MockChatBackend::new());
        let q = question();
        let hits = scripted.retrieve(&q.text, 5).unwrap();
        let docs: Vec<&Document> = hits
            .iter()
            .filter_map(|h| scripted.documents.get(&h.doc_id))
            .collect();
        let b = assemble_prompt(&q.text, &docs, &[], PromptStrategy::Rag, &scripted.registry);
        let mut mock = MockChatBackend::new();
        mock.script(&b.render_phase1(), "it depends on many things");
        let pipeline = toy_pipeline(mock);
        let result = pipeline.diagnose(&q, None);
        assert!(result.failed);
        assert!(result.predicted_knobs.is_empty());
        assert!(result.recommendations.is_empty());
    }

    #[test]
    fn diagnose_is_deterministic_with_the_mock() {
        let scripted = toy_pipeline(MockChatBackend::new());
        let q = question();
        let hits = scripted.retrieve(&q.text, 5).unwrap();
        let docs: Vec<&Document> = hits
            .iter()
            .filter_map(|h| scripted.documents.get(&h.doc_id))
            .collect();
        let b = assemble_prompt(&q.text, &docs, &[], PromptStrategy::Rag, &scripted.registry);
        let mut mock = MockChatBackend::new();
        mock.script(&b.render_phase1(), "[autocommit]");
        let knobs: BTreeSet<String> = ["autocommit".to_string()].into();
        mock.script(&b.render_phase2(&knobs), "{autocommit: 0}");

        let pipeline = toy_pipeline(mock);
        let a = pipeline.diagnose(&q, None);
        let b2 = pipeline.diagnose(&q, None);
        assert_eq!(a.predicted_knobs, b2.predicted_knobs);
        assert_eq!(a.recommendations, b2.recommendations);
        assert_eq!(a.retrieved_doc_ids, b2.retrieved_doc_ids);
    }
}
