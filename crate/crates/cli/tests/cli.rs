//! End-to-end command tests driving the built binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use confdbg_core::corpus::load_corpus;
use confdbg_core::embed::{AlignmentNetwork, BaseEmbedder, HashEmbedder, SourceKind};
use confdbg_core::knobspace::load_registry;
use confdbg_core::reasoner::{assemble_prompt, MockChatBackend, PromptStrategy};
use confdbg_core::vectorstore::{build_index, IndexEntry};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_confdbg"))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawning confdbg")
}

fn stdout_of(output: &Output) -> String {
    assert!(
        output.status.success(),
        "command failed: {}
stderr: {}",
        output.status,
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let output = run(bin().arg("frobnicate"));
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn missing_registry_file_is_a_domain_error() {
    let output = run(bin()
        .arg("ingest")
        .args(["--registry", "/nonexistent/registry.txt"])
        .args(["--manual", "/nonexistent/manual.txt"])
        .args(["--source", "s"])
        .args(["--out", "/tmp/never-written.jsonl"]));
    assert_eq!(output.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&output.stderr).is_empty());
}

#[test]
fn ingest_segments_and_labels_manual_text() {
    let dir = tempfile::tempdir().unwrap();
    let manual = dir.path().join("bulk_loading.txt");
    std::fs::write(
        &manual,
        "When importing data into InnoDB, turn off autocommit mode. Unrelated sentence. \
         Consider raising bulk_insert_buffer_size for MyISAM loads.",
    )
    .unwrap();
    let out = dir.path().join("snippets.jsonl");
    let output = run(bin()
        .arg("ingest")
        .args([
            "--registry",
            fixtures().join("registry_mysql_mini.txt").to_str().unwrap(),
        ])
        .args(["--manual", manual.to_str().unwrap()])
        .args(["--source", "Bulk Data Loading"])
        .args(["--out", out.to_str().unwrap()]));
    let text = stdout_of(&output);
    assert!(text.contains("2 labeled snippet(s)"), "{text}");
    let registry = load_registry(&fixtures().join("registry_mysql_mini.txt")).unwrap();
    let docs = load_corpus(&out, &registry).unwrap();
    assert_eq!(docs.len(), 2);
}

#[test]
fn split_partitions_questions() {
    let dir = tempfile::tempdir().unwrap();
    let questions = dir.path().join("questions.jsonl");
    let mut lines = String::new();
    for i in 0..10 {
        lines.push_str(&format!(
            "{{\"id\":\"q{i}\",\"text\":\"question {i}\",\"gold_knobs\":[\"autocommit\"]}}\n"
        ));
    }
    std::fs::write(&questions, lines).unwrap();
    let out_dir = dir.path().join("splits");
    let output = run(bin()
        .arg("split")
        .args([
            "--registry",
            fixtures().join("registry_mysql_mini.txt").to_str().unwrap(),
        ])
        .args(["--questions", questions.to_str().unwrap()])
        .args(["--ratios", "7:2:1"])
        .args(["--seed", "42"])
        .args(["--out-dir", out_dir.to_str().unwrap()]));
    let text = stdout_of(&output);
    assert!(text.contains("7 historical / 2 train / 1 test"), "{text}");
    assert!(out_dir.join("historical.jsonl").exists());
    assert!(out_dir.join("train.jsonl").exists());
    assert!(out_dir.join("test.jsonl").exists());
}

/// Write the run config used by the pipeline commands.
fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let fixtures = fixtures();
    let config_path = dir.join("run.conf");
    let config = format!(
        "registry={}\ncorpus={}\ncatalog={}\ndim=256\nbackend=mock\n{extra}",
        fixtures.join("registry_mysql_mini.txt").display(),
        fixtures.join("corpus_slow_insert.jsonl").display(),
        fixtures.join("catalog.txt").display(),
    );
    std::fs::write(&config_path, config).unwrap();
    config_path
}

#[test]
fn index_diagnose_round_trip_with_scripted_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let index_path = dir.path().join("docs.cdxi");
    let transcript_path = dir.path().join("transcript.jsonl");
    let question_path = dir.path().join("slow_insert.txt");
    let question_text =
        "Bulk INSERT statements are very slow on my InnoDB table. What should I tune?";
    std::fs::write(&question_path, question_text).unwrap();

    let config_path = write_config(
        dir.path(),
        &format!(
            "index={}\ntranscript={}\n",
            index_path.display(),
            transcript_path.display()
        ),
    );

    // Build the index through the CLI.
    let output = run(bin()
        .arg("index")
        .args(["--config", config_path.to_str().unwrap()]));
    assert!(stdout_of(&output).contains("indexed 10 document(s)"));

    // Script the transcript against the prompts the pipeline will render:
    // same registry, corpus, embedder and identity network as the CLI run.
    let registry = load_registry(&fixtures().join("registry_mysql_mini.txt")).unwrap();
    let documents = load_corpus(&fixtures().join("corpus_slow_insert.jsonl"), &registry).unwrap();
    let embedder = HashEmbedder::new(256);
    let net = AlignmentNetwork::new(256, 2, 42);
    let entries: Vec<IndexEntry> = documents
        .iter()
        .map(|d| {
            let kind = SourceKind::from(d.kind);
            IndexEntry {
                doc_id: d.id.clone(),
                kind: d.kind,
                vector: net
                    .align(&embedder.embed(&d.text, kind).unwrap(), kind)
                    .unwrap(),
            }
        })
        .collect();
    let index = build_index(entries).unwrap();
    let query = net
        .align(
            &embedder.embed(question_text, SourceKind::Question).unwrap(),
            SourceKind::Question,
        )
        .unwrap();
    let hits = index.search_topk(&query, 5).unwrap();
    let docs: Vec<&confdbg_core::corpus::Document> = hits
        .iter()
        .map(|h| documents.iter().find(|d| d.id == h.doc_id).unwrap())
        .collect();
    let bundle = assemble_prompt(question_text, &docs, &[], PromptStrategy::Rag, &registry);
    let mut mock = MockChatBackend::new();
    mock.script(
        &bundle.render_phase1(),
        "[unique_checks, foreign_key_checks]",
    );
    let knobs = ["foreign_key_checks", "unique_checks"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    mock.script(
        &bundle.render_phase2(&knobs),
        "{unique_checks: 0, foreign_key_checks: 0}",
    );
    mock.save(&transcript_path).unwrap();

    // Diagnose through the CLI, machine-readable output.
    let output = run(bin()
        .arg("diagnose")
        .args(["--config", config_path.to_str().unwrap()])
        .args(["--question-file", question_path.to_str().unwrap()])
        .args(["--format", "lines"]));
    let line = stdout_of(&output);
    let result: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    assert_eq!(result["failed"], serde_json::Value::Bool(false));
    let predicted: Vec<String> = serde_json::from_value(result["predicted_knobs"].clone()).unwrap();
    assert!(predicted.contains(&"unique_checks".to_string()));
    assert_eq!(result["recommendations"].as_array().unwrap().len(), 2);
}

#[test]
fn gen_series_then_analyze_telemetry() {
    let dir = tempfile::tempdir().unwrap();
    let telemetry_dir = dir.path().join("telemetry");
    std::fs::create_dir_all(&telemetry_dir).unwrap();
    let csv = telemetry_dir.join("threads_running.csv");
    let output = run(bin()
        .arg("gen-series")
        .args(["--length", "400"])
        .args(["--period", "20"])
        .args(["--amplitude", "6"])
        .args(["--noise", "1"])
        .args(["--spike", "123:25"])
        .args(["--seed", "3"])
        .args(["--out", csv.to_str().unwrap()]));
    assert!(stdout_of(&output).contains("1 spike(s)"));

    let config_path = write_config(
        dir.path(),
        &format!(
            "telemetry_dir={}\nmax_anomalies=1\n",
            telemetry_dir.display()
        ),
    );
    let output = run(bin()
        .arg("analyze-telemetry")
        .args(["--config", config_path.to_str().unwrap()]));
    let text = stdout_of(&output);
    assert!(text.contains("threads_running"), "{text}");
    assert!(text.contains("changed from"), "{text}");
}

#[test]
fn evaluate_counts_missing_transcripts_as_failures() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = write_config(dir.path(), "");
    let questions = dir.path().join("test.jsonl");
    let mut lines = String::new();
    for i in 0..3 {
        lines.push_str(&format!(
            "{{\"id\":\"t{i}\",\"text\":\"test question {i}\",\"gold_knobs\":[\"wait_timeout\"]}}\n"
        ));
    }
    std::fs::write(&questions, lines).unwrap();
    let output = run(bin()
        .arg("evaluate")
        .args(["--config", config_path.to_str().unwrap()])
        .args(["--questions", questions.to_str().unwrap()]));
    let text = stdout_of(&output);
    assert!(text.contains("questions: 3 (3 failed)"), "{text}");
    assert!(text.contains("F1 0.000"), "{text}");
}

#[test]
fn mine_pairs_then_train_align_writes_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = write_config(dir.path(), "");
    let questions = dir.path().join("train.jsonl");
    std::fs::write(
        &questions,
        "{\"id\":\"tq1\",\"text\":\"importing data into InnoDB is slow, autocommit is on\",\"gold_knobs\":[\"autocommit\"]}\n\
         {\"id\":\"tq2\",\"text\":\"idle connections keep dropping\",\"gold_knobs\":[\"wait_timeout\"]}\n",
    )
    .unwrap();
    let pairs = dir.path().join("pairs.jsonl");
    let output = run(bin()
        .arg("mine-pairs")
        .args(["--config", config_path.to_str().unwrap()])
        .args(["--questions", questions.to_str().unwrap()])
        .args(["--per-anchor", "2"])
        .args(["--out", pairs.to_str().unwrap()]));
    let text = stdout_of(&output);
    assert!(text.contains("mined"), "{text}");
    assert!(pairs.exists());

    let checkpoint = dir.path().join("align.ckpt");
    let output = run(bin()
        .arg("train-align")
        .args(["--config", config_path.to_str().unwrap()])
        .args(["--questions", questions.to_str().unwrap()])
        .args(["--pairs", pairs.to_str().unwrap()])
        .args(["--epochs", "3"])
        .args(["--learning-rate", "0.005"])
        .args(["--out", checkpoint.to_str().unwrap()]));
    assert!(stdout_of(&output).contains("checkpoint written"));
    let net = AlignmentNetwork::load(&checkpoint).unwrap();
    assert_eq!(net.dim(), 256);
}

#[test]
fn gen_corpus_emits_loadable_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("synth");
    let output = run(bin()
        .arg("gen-corpus")
        .args(["--clusters", "3"])
        .args(["--docs-per-cluster", "4"])
        .args(["--dim", "16"])
        .args(["--seed", "9"])
        .args(["--out-dir", out_dir.to_str().unwrap()]));
    assert!(stdout_of(&output).contains("24 document(s)"));
    let registry = load_registry(&out_dir.join("registry.txt")).unwrap();
    assert_eq!(registry.len(), 3);
    let docs = load_corpus(&out_dir.join("corpus.jsonl"), &registry).unwrap();
    assert_eq!(docs.len(), 24);
}
