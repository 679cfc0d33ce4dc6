//! Run configuration: built-in defaults, then the TOML file, then flags.

use std::path::{Path, PathBuf};

use gpkit::client::EndpointConfig;
use gpkit::embed::Distance;
use gpkit::eval::Aggregation;
use gpkit::ingest::SourceTableSpec;
use gpkit::metrics::Smoothing;
use gpkit::train::{AdapterScheme, ModelSize};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Worker threads; 1 runs every loop sequentially.
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub paths: PathsConfig,
    pub ingest: IngestConfig,
    pub corpus: CorpusSection,
    pub eval: EvalSection,
    pub endpoint: Option<EndpointConfig>,
    pub embed: EmbedSection,
    pub train: TrainSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub store: Option<PathBuf>,
    pub template_dir: Option<PathBuf>,
    pub stoplist: Option<PathBuf>,
    pub variant_templates: Option<PathBuf>,
    pub affirmative: Option<PathBuf>,
    pub negative: Option<PathBuf>,
    pub evidence: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
}

/// A table read with an explicit column mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntry {
    pub path: PathBuf,
    pub spec: SourceTableSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub gene_info: Vec<PathBuf>,
    pub gene_phenotype: Vec<PathBuf>,
    pub disgenet: Vec<PathBuf>,
    pub gene_protein: Vec<PathBuf>,
    pub dbgap: Vec<PathBuf>,
    pub tables: Vec<TableEntry>,
    pub evidence_spec: Option<SourceTableSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub negative_ratio: f64,
    pub val_size: usize,
    pub balance: bool,
    pub verified_only: bool,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            negative_ratio: 1.0,
            val_size: 10_000,
            balance: false,
            verified_only: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DirectionChoice {
    P2g,
    G2p,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum StyleChoice {
    Question,
    Completion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub qa_n: usize,
    pub direction: DirectionChoice,
    pub style: StyleChoice,
    pub relation_variants: usize,
    pub aggregation: Aggregation,
    pub max_n: usize,
    pub smoothing: Smoothing,
    pub max_new_tokens: u32,
    pub temperature: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            qa_n: 1000,
            direction: DirectionChoice::Both,
            style: StyleChoice::Question,
            relation_variants: 3,
            aggregation: Aggregation::OracleBest,
            max_n: 4,
            smoothing: Smoothing::AddOne,
            max_new_tokens: 128,
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ColorBy {
    #[default]
    Tissue,
    Pair,
    Kind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedSection {
    pub metric: Distance,
    /// Empty means every layer in the export.
    pub layers: Vec<u32>,
    pub color_by: ColorBy,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub size: ModelSize,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<u32>,
    pub adapter: Option<AdapterScheme>,
    pub trainable_fraction: Option<f64>,
    pub early_stop_epochs: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: String, message: String },
}

impl RunConfig {
    pub fn parse(path: &str, text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_string(),
            message: e.to_string(),
        })
    }

    /// Reads `path`; an empty file yields all defaults.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&path.display().to_string(), &text)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// SHA-256 of the effective configuration. `out` and `jobs` are left
    /// out: neither changes what gets written.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        c.jobs = None;
        gpkit::sha256_hex(self.echo_of(&c))
    }

    pub fn echo(&self) -> String {
        self.echo_of(self)
    }

    fn echo_of(&self, c: &RunConfig) -> String {
        serde_json::to_string(c).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        let c = RunConfig::parse("c.toml", "").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.corpus.negative_ratio, 1.0);
        assert_eq!(c.eval.aggregation, Aggregation::OracleBest);
    }

    #[test]
    fn misspelled_key_is_named() {
        let err = RunConfig::parse("c.toml", "[corpus]\nnegative_ration = 2.0\n").unwrap_err();
        assert!(err.to_string().contains("negative_ration"), "{err}");
        let err = RunConfig::parse("c.toml", "sead = 3\n").unwrap_err();
        assert!(err.to_string().contains("sead"), "{err}");
    }

    #[test]
    fn sections_parse() {
        let text = r#"
seed = 7
[corpus]
val_size = 5
[eval]
aggregation = "MAJORITY"
smoothing = "none"
[endpoint]
base_url = "http://127.0.0.1:9/v1/completions"
model_name = "m"
auth_env = "TOKEN_VAR"
[train]
size = "large"
learning_rate = 2e-5
[[ingest.tables]]
path = "g.tsv"
spec = { source = "GENE_INFO", columns = { gene_id = 0, symbol = "Symbol" } }
"#;
        let c = RunConfig::parse("c.toml", text).unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.corpus.val_size, 5);
        assert_eq!(c.corpus.negative_ratio, 1.0);
        assert_eq!(c.eval.aggregation, Aggregation::Majority);
        assert_eq!(c.train.size, ModelSize::Large);
        assert_eq!(c.ingest.tables.len(), 1);
        assert_eq!(c.endpoint.unwrap().auth_env.as_deref(), Some("TOKEN_VAR"));
    }

    #[test]
    fn hash_ignores_out_and_jobs() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out = Some("elsewhere".into());
        b.jobs = Some(3);
        assert_eq!(a.hash(), b.hash());
        b.seed = Some(1);
        assert_ne!(a.hash(), b.hash());
    }
}
