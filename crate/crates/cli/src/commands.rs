//! Command implementations. Each builds what it needs from the run config,
//! does its work, and writes outputs atomically.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde_json::json;

use confdbg_core::corpus::{
    load_corpora, load_questions, save_corpus, save_questions, segment_manual, split_dataset,
    DebugQuestion, Document,
};
use confdbg_core::embed::{
    mine_training_pairs, train_alignment, AlignmentNetwork, BaseEmbedder, EmbeddingVector,
    HashEmbedder, MinerConfig, PairType, RemoteEmbedder, SourceKind, TrainConfig, TrainingTriple,
};
use confdbg_core::evalharness::{load_verdicts, record_runnable, run_nl_eval};
use confdbg_core::knobspace::{load_registry, KnobRegistry};
use confdbg_core::reasoner::{
    ChatBackend, DiagnosisResult, MockChatBackend, Pipeline, PipelineConfig, RemoteChatBackend,
};
use confdbg_core::synthbench::{self, SpikeSeriesSpec, SyntheticCorpusSpec};
use confdbg_core::telemetry::{
    analyze_dir, parse_catalog, save_series_csv, select_relevant, AnalysisConfig, MetricCatalog,
};
use confdbg_core::vectorstore::{build_index, IndexEntry, VectorIndex};
use confdbg_core::write_atomic;

use crate::config::{BackendKind, RunConfig};

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut config = match path {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    config.apply_overrides(overrides)?;
    // The CLI owns the process parallelism limit and hands it down to the
    // per-metric analysis pool. Already-initialized is fine (tests, repeated
    // commands in one process).
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build_global();
    Ok(config)
}

fn registry_of(config: &RunConfig) -> Result<KnobRegistry> {
    let path = config
        .registry
        .as_ref()
        .context("no registry configured (set `registry=` or pass --set registry=PATH)")?;
    Ok(load_registry(path)?)
}

fn documents_of(config: &RunConfig, registry: &KnobRegistry) -> Result<Vec<Document>> {
    if config.corpus.is_empty() {
        bail!("no corpus configured (set `corpus=` or pass --set corpus=PATHS)");
    }
    load_corpora(&config.corpus, registry).context("loading corpora")
}

fn embedder_of(config: &RunConfig) -> Result<Arc<dyn BaseEmbedder>> {
    match config.backend {
        BackendKind::Mock => Ok(Arc::new(HashEmbedder::new(config.dim))),
        BackendKind::Remote => {
            let url = config
                .embed_url
                .as_ref()
                .context("remote backend needs `embed_url=`")?;
            Ok(Arc::new(RemoteEmbedder::new(
                url.clone(),
                config.model.clone(),
                config.token_env.clone(),
                config.dim,
                config.timeout(),
            )))
        }
    }
}

fn chat_of(config: &RunConfig) -> Result<Arc<dyn ChatBackend>> {
    match config.backend {
        BackendKind::Mock => {
            let mock = match &config.transcript {
                Some(path) => MockChatBackend::from_path(path)
                    .with_context(|| format!("loading transcript {}", path.display()))?,
                None => MockChatBackend::new(),
            };
            Ok(Arc::new(mock))
        }
        BackendKind::Remote => {
            let url = config
                .base_url
                .as_ref()
                .context("remote backend needs `base_url=`")?;
            Ok(Arc::new(RemoteChatBackend::new(
                url.clone(),
                config.token_env.clone(),
                config.timeout(),
            )))
        }
    }
}

fn network_of(config: &RunConfig) -> Result<AlignmentNetwork> {
    match &config.checkpoint {
        Some(path) if path.exists() => Ok(AlignmentNetwork::load(path)?),
        _ => Ok(AlignmentNetwork::new(
            config.dim,
            config.layers,
            config.seed,
        )),
    }
}

fn catalog_of(config: &RunConfig, registry: &KnobRegistry) -> Result<MetricCatalog> {
    match &config.catalog {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading catalog {}", path.display()))?;
            Ok(parse_catalog(&text, registry)?)
        }
        None => Ok(MetricCatalog::new()),
    }
}

fn aligned_entries(
    documents: &[Document],
    embedder: &dyn BaseEmbedder,
    net: &AlignmentNetwork,
) -> Result<Vec<IndexEntry>> {
    documents
        .iter()
        .map(|doc| {
            let kind = SourceKind::from(doc.kind);
            let base = embedder.embed(&doc.text, kind)?;
            let aligned = net.align(&base, kind)?;
            Ok(IndexEntry {
                doc_id: doc.id.clone(),
                kind: doc.kind,
                vector: aligned,
            })
        })
        .collect::<Result<Vec<_>, confdbg_core::embed::EmbedError>>()
        .map_err(Into::into)
}

fn pipeline_of(config: &RunConfig) -> Result<Pipeline> {
    let registry = registry_of(config)?;
    let documents = documents_of(config, &registry)?;
    let embedder = embedder_of(config)?;
    let net = network_of(config)?;
    let index = match &config.index {
        Some(path) if path.exists() => VectorIndex::load(path)?,
        _ => build_index(aligned_entries(&documents, embedder.as_ref(), &net)?)?,
    };
    let catalog = catalog_of(config, &registry)?;
    let chat = chat_of(config)?;
    Ok(Pipeline {
        registry,
        documents: documents.into_iter().map(|d| (d.id.clone(), d)).collect(),
        index,
        net,
        embedder,
        chat,
        catalog,
        config: PipelineConfig {
            retrieval_k: config.retrieval_k,
            telemetry_top_k: config.telemetry_top_k,
            alpha: config.alpha,
            normal_percentile: config.percentile,
            max_anomalies: config.max_anomalies,
            strategy: config.strategy,
            model: config.model.clone(),
        },
    })
}

pub fn ingest(registry_path: &Path, manual: &Path, source: &str, out: &Path) -> Result<()> {
    let registry = load_registry(registry_path)?;
    let text = std::fs::read_to_string(manual)
        .with_context(|| format!("reading manual {}", manual.display()))?;
    let docs = segment_manual(&text, &registry, source);
    save_corpus(&docs, out)?;
    println!(
        "ingested {} labeled snippet(s) from {} into {}",
        docs.len(),
        manual.display(),
        out.display()
    );
    Ok(())
}

pub fn split(
    registry_path: &Path,
    questions_path: &Path,
    ratios: &str,
    seed: u64,
    out_dir: &Path,
) -> Result<()> {
    let registry = load_registry(registry_path)?;
    let questions = load_questions(questions_path, &registry)?;
    let parts: Vec<usize> = ratios
        .split(':')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("bad ratio `{ratios}` (want A:B:C)"))?;
    if parts.len() != 3 {
        bail!("bad ratio `{ratios}` (want A:B:C)");
    }
    let dataset = split_dataset(&questions, (parts[0], parts[1], parts[2]), seed)?;
    std::fs::create_dir_all(out_dir)?;
    save_corpus(&dataset.historical, &out_dir.join("historical.jsonl"))?;
    save_questions(&dataset.train, &out_dir.join("train.jsonl"))?;
    save_questions(&dataset.test, &out_dir.join("test.jsonl"))?;
    println!(
        "split {} questions into {} historical / {} train / {} test under {}",
        questions.len(),
        dataset.historical.len(),
        dataset.train.len(),
        dataset.test.len(),
        out_dir.display()
    );
    Ok(())
}

pub fn index(config_path: Option<&Path>, overrides: &[String], out: Option<&Path>) -> Result<()> {
    let config = load_config(config_path, overrides)?;
    let registry = registry_of(&config)?;
    let documents = documents_of(&config, &registry)?;
    let embedder = embedder_of(&config)?;
    let net = network_of(&config)?;
    let index = build_index(aligned_entries(&documents, embedder.as_ref(), &net)?)?;
    let out_path = out
        .map(Path::to_path_buf)
        .or_else(|| config.index.clone())
        .context("no index output path (pass --out or set `index=`)")?;
    index.persist(&out_path)?;
    println!(
        "indexed {} document(s) into {}",
        index.len(),
        out_path.display()
    );
    Ok(())
}

pub fn mine_pairs(
    config_path: Option<&Path>,
    overrides: &[String],
    questions_path: &Path,
    per_anchor: usize,
    pool: usize,
    out: &Path,
) -> Result<()> {
    let config = load_config(config_path, overrides)?;
    let registry = registry_of(&config)?;
    let documents = documents_of(&config, &registry)?;
    let questions = load_questions(questions_path, &registry)?;
    let embedder = embedder_of(&config)?;
    let (triples, report) = mine_training_pairs(
        &questions,
        &documents,
        embedder.as_ref(),
        &MinerConfig {
            per_anchor,
            candidate_pool: pool,
            seed: config.seed,
        },
    )?;
    let mut lines = String::new();
    for t in &triples {
        let record = json!({
            "anchor_id": t.anchor_id,
            "positive_id": t.positive_id,
            "negative_ids": t.negatives.iter().map(|(id, _)| id).collect::<Vec<_>>(),
            "pair_type": t.pair_type,
        });
        lines.push_str(&record.to_string());
        lines.push('\n');
    }
    write_atomic(out, lines.as_bytes())?;
    println!(
        "mined {} triple(s) ({} manual-manual, {} question-question, {} question-manual); \
         {} anchor(s) had no positive",
        triples.len(),
        report.per_type[0],
        report.per_type[1],
        report.per_type[2],
        report.no_positive.len()
    );
    Ok(())
}

pub fn train_align(
    config_path: Option<&Path>,
    overrides: &[String],
    questions_path: &Path,
    pairs_path: &Path,
    epochs: usize,
    learning_rate: f64,
    out: Option<&Path>,
) -> Result<()> {
    let config = load_config(config_path, overrides)?;
    let registry = registry_of(&config)?;
    let documents = documents_of(&config, &registry)?;
    let questions = load_questions(questions_path, &registry)?;
    let embedder = embedder_of(&config)?;

    // Rebuild triples from pairs-file ids, embedding each referenced text
    // once.
    let doc_by_id: BTreeMap<&str, &Document> =
        documents.iter().map(|d| (d.id.as_str(), d)).collect();
    let question_by_id: BTreeMap<&str, &DebugQuestion> =
        questions.iter().map(|q| (q.id.as_str(), q)).collect();
    let mut embedding_cache: BTreeMap<String, EmbeddingVector> = BTreeMap::new();
    let mut embed_doc = |id: &str| -> Result<(EmbeddingVector, SourceKind)> {
        let doc = doc_by_id
            .get(id)
            .with_context(|| format!("pairs file references unknown document `{id}`"))?;
        let kind = SourceKind::from(doc.kind);
        if let Some(hit) = embedding_cache.get(id) {
            return Ok((hit.clone(), kind));
        }
        let v = embedder.embed(&doc.text, kind)?;
        embedding_cache.insert(id.to_string(), v.clone());
        Ok((v, kind))
    };

    let text = std::fs::read_to_string(pairs_path)
        .with_context(|| format!("reading pairs {}", pairs_path.display()))?;
    let mut triples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: serde_json::Value = serde_json::from_str(line)
            .with_context(|| format!("{}:{}", pairs_path.display(), idx + 1))?;
        let anchor_id = record["anchor_id"]
            .as_str()
            .with_context(|| format!("{}:{}: missing anchor_id", pairs_path.display(), idx + 1))?;
        let positive_id = record["positive_id"].as_str().with_context(|| {
            format!("{}:{}: missing positive_id", pairs_path.display(), idx + 1)
        })?;
        let pair_type: PairType = serde_json::from_value(record["pair_type"].clone())
            .with_context(|| format!("{}:{}: bad pair_type", pairs_path.display(), idx + 1))?;
        let question = question_by_id
            .get(anchor_id)
            .with_context(|| format!("pairs file references unknown question `{anchor_id}`"))?;
        let anchor = embedder.embed(&question.text, SourceKind::Question)?;
        let (positive, positive_kind) = embed_doc(positive_id)?;
        let mut negatives = Vec::new();
        for neg in record["negative_ids"].as_array().with_context(|| {
            format!("{}:{}: missing negative_ids", pairs_path.display(), idx + 1)
        })? {
            let neg_id = neg.as_str().context("negative id must be a string")?;
            let (vector, _) = embed_doc(neg_id)?;
            negatives.push((neg_id.to_string(), vector));
        }
        triples.push(TrainingTriple {
            anchor_id: anchor_id.to_string(),
            anchor,
            positive_id: positive_id.to_string(),
            positive,
            positive_kind,
            negatives,
            negative_kind: pair_type.negative_kind(),
            pair_type,
        });
    }

    let mut net = network_of(&config)?;
    let trace = train_alignment(
        &mut net,
        &triples,
        &TrainConfig {
            epochs,
            learning_rate,
            tau: config.tau,
            seed: config.seed,
        },
    )?;
    let out_path = out
        .map(Path::to_path_buf)
        .or_else(|| config.checkpoint.clone())
        .context("no checkpoint output path (pass --out or set `checkpoint=`)")?;
    net.save(&out_path)?;
    let first = trace.first_epoch_loss().unwrap_or(0.0);
    let last = trace.last_epoch_loss().unwrap_or(0.0);
    println!(
        "trained on {} triple(s) for {epochs} epoch(s); mean loss {first:.4} -> {last:.4}; \
         checkpoint written to {}",
        triples.len(),
        out_path.display()
    );
    Ok(())
}

pub fn synthesize(
    config_path: Option<&Path>,
    overrides: &[String],
    per_knob: usize,
    out: &Path,
    report_path: Option<&Path>,
) -> Result<()> {
    let config = load_config(config_path, overrides)?;
    let registry = registry_of(&config)?;
    let documents = documents_of(&config, &registry)?;
    let chat = chat_of(&config)?;
    let (docs, report) = confdbg_core::augment::synthesize_dataset(
        &registry,
        &documents,
        per_knob,
        chat.as_ref(),
        &config.model,
        config.seed,
    );
    save_corpus(&docs, out)?;
    if let Some(path) = report_path {
        write_atomic(path, report.render().as_bytes())?;
    }
    println!(
        "synthesized {} question(s) ({} attempted, {} failed, {} knob(s) skipped) into {}",
        docs.len(),
        report.attempted(),
        report.failed(),
        report.skipped_knobs.len(),
        out.display()
    );
    Ok(())
}

pub fn analyze_telemetry(
    config_path: Option<&Path>,
    overrides: &[String],
    question: Option<&str>,
    format: &str,
) -> Result<()> {
    let config = load_config(config_path, overrides)?;
    let registry = registry_of(&config)?;
    let catalog = catalog_of(&config, &registry)?;
    let dir = config
        .telemetry_dir
        .as_ref()
        .context("no telemetry directory (set `telemetry_dir=`)")?;
    let analysis = AnalysisConfig {
        alpha: config.alpha,
        max_anomalies: config.max_anomalies,
        normal_percentile: config.percentile,
    };
    let (mut narratives, failures) = analyze_dir(dir, &catalog, &analysis)?;
    if let Some(question_text) = question {
        let embedder = embedder_of(&config)?;
        narratives = select_relevant(
            &narratives,
            question_text,
            config.telemetry_top_k,
            embedder.as_ref(),
        );
    }
    match format {
        "lines" => {
            for n in &narratives {
                println!("{}", serde_json::to_string(n)?);
            }
        }
        _ => {
            if narratives.is_empty() {
                println!("no anomalous telemetry detected");
            }
            for n in &narratives {
                println!("- {}", n.text);
            }
        }
    }
    for failure in failures {
        eprintln!("warning: metric {}: {}", failure.metric, failure.error);
    }
    Ok(())
}

pub fn diagnose(
    config_path: Option<&Path>,
    overrides: &[String],
    question_file: &Path,
    format: &str,
) -> Result<()> {
    let config = load_config(config_path, overrides)?;
    let pipeline = pipeline_of(&config)?;
    let text = std::fs::read_to_string(question_file)
        .with_context(|| format!("reading question {}", question_file.display()))?;
    let question = DebugQuestion {
        id: question_file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "question".to_string()),
        text: text.trim().to_string(),
        gold_knobs: Default::default(),
        gold_values: Vec::new(),
    };
    let result = pipeline.diagnose(&question, config.telemetry_dir.as_deref());
    print_diagnosis(&result, format)?;
    Ok(())
}

fn print_diagnosis(result: &DiagnosisResult, format: &str) -> Result<()> {
    if format == "lines" {
        println!("{}", serde_json::to_string(result)?);
        return Ok(());
    }
    println!("question: {}", result.question_id);
    if result.failed {
        println!(
            "status: FAILED ({})",
            result.error.as_deref().unwrap_or("format failure")
        );
    } else {
        println!("status: ok");
    }
    println!(
        "predicted knobs: {}",
        result
            .predicted_knobs
            .iter()
            .cloned()
            .collect::<Vec<_>>()
            .join(", ")
    );
    if !result.recommendations.is_empty() {
        println!("recommendations:");
        for r in &result.recommendations {
            println!("  {} = {}", r.knob, r.value.raw);
        }
    }
    if !result.narratives.is_empty() {
        println!("telemetry:");
        for n in &result.narratives {
            println!("  - {n}");
        }
    }
    if !result.retrieved_doc_ids.is_empty() {
        println!("retrieved: {}", result.retrieved_doc_ids.join(", "));
    }
    if !result.hallucinated_knobs.is_empty() {
        println!(
            "dropped unknown knobs: {}",
            result.hallucinated_knobs.join(", ")
        );
    }
    println!(
        "latency: retrieval {} ms, telemetry {} ms, reasoning {} ms, total {} ms",
        result.retrieval_ms,
        result.telemetry_ms,
        result.reasoning_ms,
        result.total_ms()
    );
    Ok(())
}

pub fn evaluate(
    config_path: Option<&Path>,
    overrides: &[String],
    questions_path: &Path,
    verdicts_path: Option<&Path>,
    format: &str,
) -> Result<()> {
    let config = load_config(config_path, overrides)?;
    let pipeline = pipeline_of(&config)?;
    let registry = registry_of(&config)?;
    let questions = load_questions(questions_path, &registry)?;
    let (report, records) = run_nl_eval(&pipeline, &questions)?;

    if format == "lines" {
        for record in &records {
            println!("{}", serde_json::to_string(record)?);
        }
        println!("{}", serde_json::to_string(&report)?);
    } else {
        println!("questions: {} ({} failed)", report.n, report.failures);
        println!(
            "mean precision {:.3}  recall {:.3}  F1 {:.3}",
            report.mean_precision, report.mean_recall, report.mean_f1
        );
        let recall_cells: Vec<String> = report
            .recall_at_k
            .iter()
            .map(|(k, r)| format!("@{k} {r:.3}"))
            .collect();
        println!("document retrieval recall: {}", recall_cells.join("  "));
        println!(
            "mean latency: retrieval {:.1} ms, telemetry {:.1} ms, reasoning {:.1} ms, total {:.1} ms",
            report.mean_retrieval_ms,
            report.mean_telemetry_ms,
            report.mean_reasoning_ms,
            report.mean_total_ms
        );
    }

    if let Some(path) = verdicts_path {
        let verdicts = load_verdicts(path)?;
        let results: Vec<DiagnosisResult> = questions
            .iter()
            .map(|q| pipeline.diagnose(q, config.telemetry_dir.as_deref()))
            .collect();
        let runnable = record_runnable(&results, &verdicts)?;
        if format == "lines" {
            println!("{}", serde_json::to_string(&runnable)?);
        } else {
            println!(
                "runnable setting: success rate {:.2} over {} verdict(s); \
                 mean recommended knobs {:.2}",
                runnable.success_rate, runnable.n, runnable.mean_recommended_knobs
            );
        }
    }
    Ok(())
}

pub fn gen_corpus(
    clusters: usize,
    docs_per_cluster: usize,
    noise: f64,
    offset: f64,
    dim: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<()> {
    let spec = SyntheticCorpusSpec {
        clusters,
        docs_per_cluster_per_kind: docs_per_cluster,
        noise,
        offset,
        dim,
        seed,
    };
    let corpus = synthbench::gen_corpus(&spec);
    std::fs::create_dir_all(out_dir)?;
    // Registry of the synthetic cluster knobs, in the standard format.
    let mut registry = String::new();
    for knob in &corpus.truth.cluster_knobs {
        registry.push_str(&format!(
            "{knob} | boolean | | | synthetic cluster label | \n"
        ));
    }
    write_atomic(&out_dir.join("registry.txt"), registry.as_bytes())?;
    save_corpus(&corpus.documents, &out_dir.join("corpus.jsonl"))?;
    save_questions(&corpus.questions, &out_dir.join("questions.jsonl"))?;
    println!(
        "generated {} document(s) and {} question(s) across {} cluster(s) under {}",
        corpus.documents.len(),
        corpus.questions.len(),
        clusters,
        out_dir.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn gen_series(
    length: usize,
    period: usize,
    amplitude: f64,
    slope: f64,
    noise: f64,
    spikes: &[String],
    seed: u64,
    out: &Path,
) -> Result<()> {
    let mut parsed_spikes = Vec::new();
    for spec in spikes {
        let (idx, mag) = spec
            .split_once(':')
            .with_context(|| format!("bad spike `{spec}` (want INDEX:SIGMAS)"))?;
        parsed_spikes.push((idx.trim().parse::<usize>()?, mag.trim().parse::<f64>()?));
    }
    let spec = SpikeSeriesSpec {
        length,
        period,
        amplitude,
        trend_slope: slope,
        noise_sigma: noise,
        spikes: parsed_spikes,
        seed,
    };
    let (mut series, spike_indices) = synthbench::gen_series(&spec);
    series.metric = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "synthetic".to_string());
    save_series_csv(&series, out)?;
    println!(
        "generated {} sample(s) (period {period}, {} spike(s)) into {}",
        length,
        spike_indices.len(),
        out.display()
    );
    Ok(())
}
