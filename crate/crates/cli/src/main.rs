//! `confdbg`: operator front end for the configuration-debugging pipeline.
//!
//! Subcommands wire the library stages together: ingest manuals, build the
//! vector index, mine contrastive pairs, train the alignment network,
//! synthesize training questions, analyze telemetry, diagnose a question,
//! and evaluate a test set.
//!
//! Exit codes: 0 on success, 1 on a domain error (one-line diagnostic on
//! standard error), 2 on usage errors.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "confdbg",
    version,
    about = "Retrieval-augmented DBMS configuration debugging"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment raw manual text into labeled snippets in the corpus format.
    Ingest {
        /// Knob registry file.
        #[arg(long)]
        registry: PathBuf,
        /// Raw manual text file.
        #[arg(long)]
        manual: PathBuf,
        /// Manual section title recorded as each snippet's source.
        #[arg(long)]
        source: String,
        /// Output corpus file (line-delimited documents).
        #[arg(long)]
        out: PathBuf,
    },
    /// Shuffle a question set and split it into historical/train/test parts.
    Split {
        #[arg(long)]
        registry: PathBuf,
        /// Questions file (line-delimited).
        #[arg(long)]
        questions: PathBuf,
        /// Ratio as `A:B:C`, e.g. `7:2:1`.
        #[arg(long, default_value = "7:2:1")]
        ratios: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Directory receiving historical.jsonl, train.jsonl, test.jsonl.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Embed, align and index corpus documents into a vector index file.
    Index {
        /// Config file with registry/corpus/checkpoint/index paths.
        #[arg(long)]
        config: Option<PathBuf>,
        /// `key=value` overrides applied after the config file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Output index path (overrides the config's `index`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mine contrastive training pairs from questions and documents.
    MinePairs {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Training questions file.
        #[arg(long)]
        questions: PathBuf,
        /// Positives (and negatives) mined per anchor and pair type.
        #[arg(long, default_value_t = 4)]
        per_anchor: usize,
        /// Candidate pool examined before the overlap filter.
        #[arg(long, default_value_t = 50)]
        pool: usize,
        /// Output pairs file (line-delimited).
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the alignment network on mined pairs and write a checkpoint.
    TrainAlign {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        questions: PathBuf,
        /// Pairs file produced by `mine-pairs`.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        learning_rate: f64,
        /// Output checkpoint path (overrides the config's `checkpoint`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate labeled synthetic questions by logic-chain decomposition.
    Synthesize {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Questions generated per knob.
        #[arg(long, default_value_t = 3)]
        per_knob: usize,
        /// Output corpus file of synthetic questions.
        #[arg(long)]
        out: PathBuf,
        /// Line-delimited synthesis report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Detect and narrate anomalous telemetry under a directory.
    AnalyzeTelemetry {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Question text used to rank narratives (optional).
        #[arg(long)]
        question: Option<String>,
        /// Machine-readable line-delimited output instead of the report.
        #[arg(long, value_name = "lines|human", default_value = "human")]
        format: String,
    },
    /// Run the full two-phase diagnosis for one question.
    Diagnose {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// File whose content is the question text.
        #[arg(long)]
        question_file: PathBuf,
        #[arg(long, value_name = "lines|human", default_value = "human")]
        format: String,
    },
    /// Evaluate a labeled test set and report aggregate metrics.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Test questions file.
        #[arg(long)]
        questions: PathBuf,
        /// Externally authored solved/unsolved verdicts to join in.
        #[arg(long)]
        verdicts: Option<PathBuf>,
        #[arg(long, value_name = "lines|human", default_value = "human")]
        format: String,
    },
    /// Generate a synthetic two-source corpus (registry, documents,
    /// questions) for benchmarks and experiments.
    GenCorpus {
        #[arg(long, default_value_t = 4)]
        clusters: usize,
        #[arg(long, default_value_t = 10)]
        docs_per_cluster: usize,
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        #[arg(long, default_value_t = 0.9)]
        offset: f64,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Generate a seasonal series with injected spikes as a telemetry CSV.
    GenSeries {
        #[arg(long, default_value_t = 600)]
        length: usize,
        #[arg(long, default_value_t = 24)]
        period: usize,
        #[arg(long, default_value_t = 10.0)]
        amplitude: f64,
        #[arg(long, default_value_t = 0.0)]
        slope: f64,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        /// Spike as `INDEX:SIGMAS`; repeatable.
        #[arg(long = "spike", value_name = "INDEX:SIGMAS")]
        spikes: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path; the metric name is the file stem.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest {
            registry,
            manual,
            source,
            out,
        } => commands::ingest(&registry, &manual, &source, &out),
        Command::Split {
            registry,
            questions,
            ratios,
            seed,
            out_dir,
        } => commands::split(&registry, &questions, &ratios, seed, &out_dir),
        Command::Index {
            config,
            overrides,
            out,
        } => commands::index(config.as_deref(), &overrides, out.as_deref()),
        Command::MinePairs {
            config,
            overrides,
            questions,
            per_anchor,
            pool,
            out,
        } => commands::mine_pairs(
            config.as_deref(),
            &overrides,
            &questions,
            per_anchor,
            pool,
            &out,
        ),
        Command::TrainAlign {
            config,
            overrides,
            questions,
            pairs,
            epochs,
            learning_rate,
            out,
        } => commands::train_align(
            config.as_deref(),
            &overrides,
            &questions,
            &pairs,
            epochs,
            learning_rate,
            out.as_deref(),
        ),
        Command::Synthesize {
            config,
            overrides,
            per_knob,
            out,
            report,
        } => commands::synthesize(
            config.as_deref(),
            &overrides,
            per_knob,
            &out,
            report.as_deref(),
        ),
        Command::AnalyzeTelemetry {
            config,
            overrides,
            question,
            format,
        } => {
            commands::analyze_telemetry(config.as_deref(), &overrides, question.as_deref(), &format)
        }
        Command::Diagnose {
            config,
            overrides,
            question_file,
            format,
        } => commands::diagnose(config.as_deref(), &overrides, &question_file, &format),
        Command::Evaluate {
            config,
            overrides,
            questions,
            verdicts,
            format,
        } => commands::evaluate(
            config.as_deref(),
            &overrides,
            &questions,
            verdicts.as_deref(),
            &format,
        ),
        Command::GenCorpus {
            clusters,
            docs_per_cluster,
            noise,
            offset,
            dim,
            seed,
            out_dir,
        } => commands::gen_corpus(
            clusters,
            docs_per_cluster,
            noise,
            offset,
            dim,
            seed,
            &out_dir,
        ),
        Command::GenSeries {
            length,
            period,
            amplitude,
            slope,
            noise,
            spikes,
            seed,
            out,
        } => commands::gen_series(length, period, amplitude, slope, noise, &spikes, seed, &out),
    };
    if let Err(error) = result {
        eprintln!("error: {error:#}");
        std::process::exit(1);
    }
}
