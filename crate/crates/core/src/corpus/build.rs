use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::generate::{ExampleKey, Generator, Skip};
use super::split::{balance_and_split, Split};
use super::{sample_negatives, CorpusError, CorpusExample, CorpusTemplates, Polarity, Stage, TaskKind};
use crate::par::Execution;
use crate::store::KnowledgeStore;
use crate::{MASK_TOKEN, MASK_TOKEN_TARGET_ID};

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub seed: u64,
    /// Negative pairs per positive pair; 0 disables negatives.
    #[serde(default = "default_ratio")]
    pub negative_ratio: f64,
    /// Validation examples held out per stage.
    #[serde(default = "default_val_size")]
    pub val_size: usize,
    #[serde(default)]
    pub balance: bool,
    #[serde(default)]
    pub verified_only: bool,
}

fn default_ratio() -> f64 {
    1.0
}

fn default_val_size() -> usize {
    10_000
}

impl CorpusConfig {
    pub fn new(seed: u64) -> Self {
        CorpusConfig {
            seed,
            negative_ratio: default_ratio(),
            val_size: default_val_size(),
            balance: false,
            verified_only: false,
        }
    }

    /// SHA-256 over the serialized config and the template digest.
    pub fn hash(&self, templates: &CorpusTemplates) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        crate::sha256_hex(format!("{json}\n{}", templates.digest))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub stage: Stage,
    pub split: String,
    pub examples: usize,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSummary {
    pub examples: usize,
    pub bytes: u64,
    pub train: usize,
    pub validation: usize,
    pub task_kinds: BTreeMap<TaskKind, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub config_hash: String,
    pub seed: u64,
    pub mask_token: String,
    pub mask_token_target_id: u32,
    pub template_version: String,
    pub template_digest: String,
    pub negative_ratio: f64,
    pub positive_pairs: usize,
    pub negative_pairs: usize,
    pub val_size: usize,
    pub balance: bool,
    pub verified_only: bool,
    pub total_examples: usize,
    pub task_kinds: BTreeMap<TaskKind, usize>,
    pub polarities: BTreeMap<Polarity, usize>,
    pub stages: BTreeMap<Stage, StageSummary>,
    pub splits: BTreeMap<String, usize>,
    pub files: Vec<FileEntry>,
    pub skipped: BTreeMap<String, usize>,
    pub dropped_duplicates: usize,
    pub dropped_by_balance: usize,
    /// Caller-supplied values echoed verbatim, e.g. a run configuration hash.
    #[serde(default)]
    pub echo: BTreeMap<String, String>,
}

impl CorpusManifest {
    fn empty(config: &CorpusConfig, templates: &CorpusTemplates) -> Self {
        CorpusManifest {
            config_hash: config.hash(templates),
            seed: config.seed,
            mask_token: MASK_TOKEN.to_string(),
            mask_token_target_id: MASK_TOKEN_TARGET_ID,
            template_version: templates.version.clone(),
            template_digest: templates.digest.clone(),
            negative_ratio: config.negative_ratio,
            positive_pairs: 0,
            negative_pairs: 0,
            val_size: config.val_size,
            balance: config.balance,
            verified_only: config.verified_only,
            total_examples: 0,
            task_kinds: TaskKind::ALL.iter().map(|&k| (k, 0)).collect(),
            polarities: [(Polarity::Positive, 0), (Polarity::Negative, 0)].into(),
            stages: Stage::ALL.iter().map(|&s| (s, StageSummary::default())).collect(),
            splits: [("train".to_string(), 0), ("validation".to_string(), 0)].into(),
            files: Vec::new(),
            skipped: BTreeMap::new(),
            dropped_duplicates: 0,
            dropped_by_balance: 0,
            echo: BTreeMap::new(),
        }
    }

    fn record_skips(&mut self, skips: &[Skip]) {
        for s in skips {
            *self.skipped.entry(format!("{}: {}", s.kind, s.reason)).or_default() += 1;
        }
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), CorpusError> {
        std::fs::write(path, self.to_json()).map_err(|e| CorpusError::io(path, e))
    }
}

struct LineFile {
    path: std::path::PathBuf,
    out: BufWriter<File>,
    hasher: Sha256,
    bytes: u64,
    lines: usize,
}

impl LineFile {
    fn create(path: std::path::PathBuf) -> Result<Self, CorpusError> {
        let file = File::create(&path).map_err(|e| CorpusError::io(&path, e))?;
        Ok(LineFile {
            path,
            out: BufWriter::with_capacity(1 << 20, file),
            hasher: Sha256::new(),
            bytes: 0,
            lines: 0,
        })
    }

    fn push(&mut self, line: &[u8]) -> Result<(), CorpusError> {
        self.out.write_all(line).map_err(|e| CorpusError::io(&self.path, e))?;
        self.hasher.update(line);
        self.bytes += line.len() as u64;
        self.lines += 1;
        Ok(())
    }

    fn finish(mut self) -> Result<(u64, usize, String), CorpusError> {
        self.out.flush().map_err(|e| CorpusError::io(&self.path, e))?;
        Ok((self.bytes, self.lines, hex::encode(self.hasher.finalize())))
    }
}

fn encode(ex: &CorpusExample) -> Vec<u8> {
    let mut v = serde_json::to_vec(ex).expect("example serializes");
    v.push(b'\n');
    v
}

/// Writes `<stage>.<split>.jsonl` for both stages, rendering each item with
/// `render` in chunks, and fills in the manifest's accounting.
fn write_stage_files<T: Sync>(
    out_dir: &Path,
    stage: Stage,
    split: &Split<T>,
    exec: Execution,
    render: impl Fn(&T) -> CorpusExample + Sync + Send,
    manifest: &mut CorpusManifest,
) -> Result<(), CorpusError> {
    for (name, items) in [("train", &split.train), ("validation", &split.validation)] {
        let file_name = format!("{}.{}.jsonl", stage.file_prefix(), name);
        let mut file = LineFile::create(out_dir.join(&file_name))?;
        for chunk in items.chunks(CHUNK) {
            let encoded = exec.map(chunk, |item| {
                let ex = render(item);
                (ex.task_kind, ex.polarity, encode(&ex))
            });
            for (kind, polarity, line) in encoded {
                file.push(&line)?;
                *manifest.task_kinds.entry(kind).or_default() += 1;
                *manifest.polarities.entry(polarity).or_default() += 1;
                *manifest
                    .stages
                    .entry(stage)
                    .or_default()
                    .task_kinds
                    .entry(kind)
                    .or_default() += 1;
            }
        }
        let (bytes, lines, sha256) = file.finish()?;
        let summary = manifest.stages.entry(stage).or_default();
        summary.examples += lines;
        summary.bytes += bytes;
        if name == "train" {
            summary.train += lines;
        } else {
            summary.validation += lines;
        }
        *manifest.splits.entry(name.to_string()).or_default() += lines;
        manifest.total_examples += lines;
        manifest.files.push(FileEntry {
            name: file_name,
            stage,
            split: name.to_string(),
            examples: lines,
            bytes,
            sha256,
        });
    }
    manifest.dropped_duplicates += split.dropped_duplicates;
    manifest.dropped_by_balance += split.dropped_by_balance;
    Ok(())
}

fn write_skips(path: &Path, skips: &[Skip]) -> Result<(), CorpusError> {
    let mut rows: Vec<String> = skips
        .iter()
        .map(|s| format!("{}\t{}\t{}\t{}\n", s.kind, s.polarity, s.provenance.join(","), s.reason))
        .collect();
    rows.sort();
    let mut text = String::from("task_kind\tpolarity\tprovenance\treason\n");
    text.extend(rows);
    std::fs::write(path, text).map_err(|e| CorpusError::io(path, e))
}

fn ensure_dir(out_dir: &Path) -> Result<(), CorpusError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CorpusError::io(out_dir, e))
}

/// Writes already-rendered splits and `manifest.json`. Stages missing from
/// `splits` get empty files.
pub fn write_corpus(
    out_dir: &Path,
    splits: &BTreeMap<Stage, Split<CorpusExample>>,
    config: &CorpusConfig,
    templates: &CorpusTemplates,
    exec: Execution,
) -> Result<CorpusManifest, CorpusError> {
    ensure_dir(out_dir)?;
    let mut manifest = CorpusManifest::empty(config, templates);
    let empty = Split::default();
    for stage in Stage::ALL {
        let split = splits.get(&stage).unwrap_or(&empty);
        write_stage_files(out_dir, stage, split, exec, Clone::clone, &mut manifest)?;
    }
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Full pipeline: sample negatives, plan every example, split each stage,
/// then stream the rendered examples to disk. Only compact keys are held in
/// memory; text is rendered chunk by chunk while writing.
pub fn build_corpus(
    store: &KnowledgeStore,
    templates: &CorpusTemplates,
    config: &CorpusConfig,
    out_dir: &Path,
    exec: Execution,
    echo: BTreeMap<String, String>,
) -> Result<CorpusManifest, CorpusError> {
    if !(config.negative_ratio >= 0.0 && config.negative_ratio.is_finite()) {
        return Err(CorpusError::InvalidRatio(config.negative_ratio));
    }
    ensure_dir(out_dir)?;
    let negatives = if config.negative_ratio > 0.0 {
        sample_negatives(store, config.negative_ratio, config.seed)?
    } else {
        Vec::new()
    };
    let generator = Generator::new(store, templates, config.seed, &negatives, config.verified_only);
    let (keys, skips) = generator.plan(exec);

    let mut by_stage: BTreeMap<Stage, Vec<ExampleKey>> = BTreeMap::new();
    for k in keys {
        by_stage.entry(k.kind.stage()).or_default().push(k);
    }
    let mut splits = BTreeMap::new();
    for stage in Stage::ALL {
        let keys = by_stage.remove(&stage).unwrap_or_default();
        splits.insert(
            stage,
            balance_and_split(keys, config.val_size, config.seed, config.balance)?,
        );
    }

    let mut manifest = CorpusManifest::empty(config, templates);
    manifest.positive_pairs = store.positive_pairs().len();
    manifest.negative_pairs = negatives.len();
    manifest.echo = echo;
    manifest.record_skips(&skips);
    for (stage, split) in &splits {
        write_stage_files(out_dir, *stage, split, exec, |k| generator.render(k), &mut manifest)?;
    }
    write_skips(&out_dir.join("skipped.tsv"), &skips)?;
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
