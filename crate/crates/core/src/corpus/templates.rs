use std::collections::BTreeMap;
use std::path::Path;

use super::{CorpusError, TaskKind};
use crate::template::{TemplateError, TemplateFile};

pub(crate) const SLOTS: [&str; 9] = [
    "gene",
    "gene_function",
    "protein",
    "protein_function",
    "phenotype",
    "phenotype_description",
    "mechanism",
    "inheritance",
    "mask",
];

const DEFAULT_VERSION: &str = include_str!("../../templates/VERSION");

fn default_text(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::MaskedGene => include_str!("../../templates/masked_gene.txt"),
        TaskKind::MaskedPhenotype => include_str!("../../templates/masked_phenotype.txt"),
        TaskKind::GeneProteinFunc => include_str!("../../templates/gene_protein_func.txt"),
        TaskKind::GeneProduct => include_str!("../../templates/gene_product.txt"),
        TaskKind::ProteinFuncInfer => include_str!("../../templates/protein_func_infer.txt"),
        TaskKind::GeneFuncInfer => include_str!("../../templates/gene_func_infer.txt"),
        TaskKind::ProtMolecular => include_str!("../../templates/prot_molecular.txt"),
        TaskKind::ProtPathogenesis => include_str!("../../templates/prot_pathogenesis.txt"),
        TaskKind::GeneInheritance => include_str!("../../templates/gene_inheritance.txt"),
    }
}

/// One template file per task kind, plus a version tag and a content digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusTemplates {
    files: BTreeMap<TaskKind, TemplateFile>,
    pub version: String,
    pub digest: String,
}

impl CorpusTemplates {
    /// The templates compiled into the library.
    pub fn defaults() -> Self {
        let texts = TaskKind::ALL.map(|k| (k, default_text(k).to_string()));
        Self::from_texts(&texts, format!("default-{}", DEFAULT_VERSION.trim())).expect("embedded templates are valid")
    }

    /// Reads `<kind>.txt` files from `dir`; kinds without a file keep the
    /// default text. An optional `VERSION` file names the set.
    pub fn load_dir(dir: &Path) -> Result<Self, CorpusError> {
        let mut texts = Vec::new();
        for kind in TaskKind::ALL {
            let path = dir.join(format!("{}.txt", kind.template_name()));
            let text = if path.exists() {
                std::fs::read_to_string(&path).map_err(|e| CorpusError::io(&path, e))?
            } else {
                default_text(kind).to_string()
            };
            texts.push((kind, text));
        }
        let version_path = dir.join("VERSION");
        let version = if version_path.exists() {
            std::fs::read_to_string(&version_path)
                .map_err(|e| CorpusError::io(&version_path, e))?
                .trim()
                .to_string()
        } else {
            "custom".to_string()
        };
        Ok(Self::from_texts(&texts, version)?)
    }

    pub fn from_texts(texts: &[(TaskKind, String)], version: String) -> Result<Self, TemplateError> {
        use sha2::{Digest, Sha256};
        let mut files = BTreeMap::new();
        let mut hasher = Sha256::new();
        for (kind, text) in texts {
            let name = format!("{}.txt", kind.template_name());
            let file = TemplateFile::parse(&name, text)?;
            let negative: &[&str] = if kind.is_triple() {
                &["task_prompt", "input", "output", "negative_output"]
            } else {
                &["task_prompt", "input", "output"]
            };
            file.check(negative, &[], &SLOTS)?;
            hasher.update(name.as_bytes());
            hasher.update([0]);
            hasher.update(text.as_bytes());
            hasher.update([0]);
            files.insert(*kind, file);
        }
        if let Some(kind) = TaskKind::ALL.iter().find(|k| !files.contains_key(k)) {
            return Err(TemplateError {
                file: format!("{}.txt", kind.template_name()),
                line: 0,
                message: "no template for this task kind".to_string(),
            });
        }
        Ok(CorpusTemplates {
            files,
            version,
            digest: hex::encode(hasher.finalize()),
        })
    }

    pub fn file(&self, kind: TaskKind) -> &TemplateFile {
        &self.files[&kind]
    }
}
