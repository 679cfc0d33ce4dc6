//! Instruction-tuning corpora rendered from a frozen store.
//!
//! Three families are produced: stage-1 masked-entity contexts, stage-2
//! gene-protein contexts and stage-2 gene-protein-phenotype triples with
//! sampled negative pairs. Every example is keyed by a content hash, so
//! splitting and deduplication do not depend on generation order.

mod build;
mod generate;
mod negatives;
mod split;
mod templates;

pub use build::{build_corpus, write_corpus, CorpusConfig, CorpusManifest, FileEntry, StageSummary};
pub use generate::{
    mask_surface, render_gene_protein, render_stage1, render_triples, ExampleKey, Generator, Rendered, Skip,
};
pub use negatives::sample_negatives;
pub use split::{balance_and_split, Keyed, Split};
pub use templates::CorpusTemplates;

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::template::TemplateError;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("negative ratio must be positive and finite, got {0}")]
    InvalidRatio(f64),
    #[error("requested {requested} negative pairs but only {available} are available")]
    NotEnoughNegatives { requested: usize, available: usize },
    #[error("validation size {val_size} must be smaller than the {total} examples of {stage}")]
    ValidationTooLarge {
        stage: Stage,
        val_size: usize,
        total: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "STAGE1")]
    Stage1,
    #[serde(rename = "STAGE2")]
    Stage2,
}

impl Stage {
    pub const ALL: [Stage; 2] = [Stage::Stage1, Stage::Stage2];

    pub fn label(self) -> &'static str {
        match self {
            Stage::Stage1 => "STAGE1",
            Stage::Stage2 => "STAGE2",
        }
    }

    pub fn file_prefix(self) -> &'static str {
        match self {
            Stage::Stage1 => "stage1",
            Stage::Stage2 => "stage2",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskKind {
    MaskedGene,
    MaskedPhenotype,
    GeneProteinFunc,
    GeneProduct,
    ProteinFuncInfer,
    GeneFuncInfer,
    ProtMolecular,
    ProtPathogenesis,
    GeneInheritance,
}

impl TaskKind {
    pub const ALL: [TaskKind; 9] = [
        TaskKind::MaskedGene,
        TaskKind::MaskedPhenotype,
        TaskKind::GeneProteinFunc,
        TaskKind::GeneProduct,
        TaskKind::ProteinFuncInfer,
        TaskKind::GeneFuncInfer,
        TaskKind::ProtMolecular,
        TaskKind::ProtPathogenesis,
        TaskKind::GeneInheritance,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TaskKind::MaskedGene => "MASKED_GENE",
            TaskKind::MaskedPhenotype => "MASKED_PHENOTYPE",
            TaskKind::GeneProteinFunc => "GENE_PROTEIN_FUNC",
            TaskKind::GeneProduct => "GENE_PRODUCT",
            TaskKind::ProteinFuncInfer => "PROTEIN_FUNC_INFER",
            TaskKind::GeneFuncInfer => "GENE_FUNC_INFER",
            TaskKind::ProtMolecular => "PROT_MOLECULAR",
            TaskKind::ProtPathogenesis => "PROT_PATHOGENESIS",
            TaskKind::GeneInheritance => "GENE_INHERITANCE",
        }
    }

    pub fn stage(self) -> Stage {
        match self {
            TaskKind::MaskedGene | TaskKind::MaskedPhenotype => Stage::Stage1,
            _ => Stage::Stage2,
        }
    }

    /// Triple kinds carry both polarities; all others are positive only.
    pub fn is_triple(self) -> bool {
        matches!(
            self,
            TaskKind::ProtMolecular | TaskKind::ProtPathogenesis | TaskKind::GeneInheritance
        )
    }

    /// Template file name without extension.
    pub fn template_name(self) -> String {
        self.label().to_ascii_lowercase()
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn label(self) -> &'static str {
        match self {
            Polarity::Positive => "POSITIVE",
            Polarity::Negative => "NEGATIVE",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// First 16 bytes of SHA-256 over `KIND|POLARITY|prov1|prov2...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExampleId(pub [u8; 16]);

impl ExampleId {
    pub fn compute(kind: TaskKind, polarity: Polarity, provenance: &[String]) -> Self {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(kind.label());
        h.update(b"|");
        h.update(polarity.label());
        for p in provenance {
            h.update(b"|");
            h.update(p.as_bytes());
        }
        let digest = h.finalize();
        let mut id = [0u8; 16];
        id.copy_from_slice(&digest[..16]);
        ExampleId(id)
    }

    /// Leading 8 bytes as an integer, for seeded choices.
    pub fn prefix_u64(&self) -> u64 {
        u64::from_be_bytes(self.0[..8].try_into().unwrap())
    }
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl std::str::FromStr for ExampleId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = hex::decode(s).map_err(|e| format!("bad example id {s:?}: {e}"))?;
        let id: [u8; 16] = bytes
            .try_into()
            .map_err(|_| format!("bad example id {s:?}: expected 32 hex digits"))?;
        Ok(ExampleId(id))
    }
}

impl Serialize for ExampleId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ExampleId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One rendered training context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusExample {
    pub example_id: ExampleId,
    pub stage: Stage,
    pub task_kind: TaskKind,
    pub polarity: Polarity,
    pub task_prompt: String,
    pub input: String,
    pub output: String,
    pub provenance: Vec<String>,
}

impl CorpusExample {
    /// The prompt layout fed to the model during fine-tuning.
    pub fn instruction_block(&self) -> String {
        format!(
            "### Instruction:\n{}\n\n### Input:\n{}\n\n### Response:\n{}",
            self.task_prompt, self.input, self.output
        )
    }
}
