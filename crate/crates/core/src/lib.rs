//! Core engine for retrieval-augmented DBMS configuration debugging.
//!
//! Given a natural-language debugging question (and optionally exported
//! telemetry), the pipeline retrieves similar historical questions and manual
//! snippets from a unified embedding space, narrates anomalous telemetry, and
//! drives a two-phase knob-identification / value-recommendation exchange
//! with a pluggable chat-completion backend.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`knobspace`]: knob registry, value domains, and extraction of knob
//!   mentions and `{knob: value}` recommendations from free text.
//! - [`corpus`]: document ingestion, manual segmentation, dataset splits.
//! - [`embed`]: base embedding backends, the trainable per-source alignment
//!   network, contrastive pair mining, and the curriculum trainer.
//! - [`vectorstore`]: exact top-k search over aligned embeddings with binary
//!   persistence.
//! - [`telemetry`]: seasonal-trend decomposition, robust anomaly detection,
//!   and telemetry-to-text narration.
//! - [`reasoner`]: prompt assembly, chat backends (deterministic mock and
//!   remote), and the two-phase diagnosis flow.
//! - [`augment`]: logic-chain synthesis of labeled training questions.
//! - [`evalharness`]: precision/recall/F1, retrieval recall@k, success-rate
//!   bookkeeping, and batch evaluation.
//! - [`synthbench`]: deterministic generators for synthetic corpora and
//!   spiked time series used by the test suites.

pub mod augment;
pub mod corpus;
pub mod embed;
pub mod evalharness;
pub mod knobspace;
pub mod mathx;
pub mod reasoner;
pub mod synthbench;
pub mod telemetry;
pub mod vectorstore;

mod ioutil;
mod textutil;

pub use ioutil::write_atomic;
