//! Genotype-phenotype corpus construction and evaluation toolkit.
//!
//! The crate is organised around a frozen [`store::KnowledgeStore`] of genes,
//! proteins, phenotypes and their association edges:
//!
//! * [`ingest`] parses flat-file database exports into a store builder,
//! * [`corpus`] renders the store into instruction-tuning corpora,
//! * [`metrics`] and [`eval`] generate QA / relation tasks and score model answers,
//! * [`client`] obtains completions from a recorded file or an HTTP endpoint,
//! * [`embed`] analyses exported per-layer entity embeddings.
//!
//! Data-parallel loops go through [`par`], which falls back to sequential
//! execution when the `parallel` feature is disabled.

pub mod client;
pub mod corpus;
pub mod embed;
pub mod eval;
pub mod ingest;
pub mod jsonl;
pub mod metrics;
pub mod par;
pub mod store;
pub mod template;
pub mod train;

/// Literal mask marker written into stage-1 corpus text.
pub const MASK_TOKEN: &str = "<mask>";

/// Vocabulary ID the mask token is assigned to by the downstream tokenizer.
pub const MASK_TOKEN_TARGET_ID: u32 = 35073;

/// Hex-encoded SHA-256 of `bytes`.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes.as_ref()))
}
