use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::EmbedError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntityKind {
    #[serde(alias = "gene")]
    Gene,
    #[serde(alias = "phenotype")]
    Phenotype,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub entity_id: String,
    pub kind: EntityKind,
    pub layer: u32,
    #[serde(default)]
    pub pair_id: Option<String>,
    #[serde(default)]
    pub tissue_label: Option<String>,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedLine {
    pub line: usize,
    pub reason: String,
}

/// A loaded export: header fields, accepted records and rejected lines.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingExport {
    pub model: String,
    pub pooling: String,
    pub records: Vec<EmbeddingRecord>,
    pub rejects: Vec<RejectedLine>,
    /// Non-blank lines after the header.
    pub total_rows: usize,
}

impl EmbeddingExport {
    /// Layers present, ascending.
    pub fn layers(&self) -> Vec<u32> {
        self.records
            .iter()
            .map(|r| r.layer)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    #[allow(dead_code)]
    t: String,
    model: String,
    pooling: String,
}

#[derive(Deserialize)]
struct RawRecord {
    #[serde(default)]
    t: Option<String>,
    entity_id: String,
    kind: EntityKind,
    layer: u32,
    #[serde(default)]
    pair_id: Option<String>,
    #[serde(default)]
    tissue_label: Option<String>,
    vector: Vec<Value>,
}

fn component(v: &Value) -> Option<f64> {
    let x = match v {
        Value::Number(n) => n.as_f64()?,
        Value::String(s) => s.trim().parse::<f64>().ok()?,
        _ => return None,
    };
    x.is_finite().then_some(x)
}

/// Reads an export file: first non-blank line is `{"t":"header", "model":
/// ..., "pooling": ...}`, every further line one record. Lines that fail to
/// parse or carry non-finite components are rejected; a layer whose accepted
/// vectors differ in dimension is an error.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingExport, EmbedError> {
    let file = std::fs::File::open(path).map_err(|e| EmbedError::io(path, e))?;
    let mut header: Option<Header> = None;
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    let mut total_rows = 0;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| EmbedError::io(path, e))?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            let h: Header = serde_json::from_str(&line).map_err(|e| EmbedError::BadHeader {
                path: path.display().to_string(),
                line: lineno,
                message: e.to_string(),
            })?;
            if h.t != "header" {
                return Err(EmbedError::MissingHeader {
                    path: path.display().to_string(),
                });
            }
            header = Some(h);
            continue;
        }
        total_rows += 1;
        let reject = |reason: String| RejectedLine { line: lineno, reason };
        let raw: RawRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                rejects.push(reject(e.to_string()));
                continue;
            }
        };
        if raw.t.as_deref().is_some_and(|t| t != "record") {
            rejects.push(reject(format!("unexpected record tag {:?}", raw.t.unwrap())));
            continue;
        }
        if raw.vector.is_empty() {
            rejects.push(reject("empty vector".to_string()));
            continue;
        }
        let vector: Option<Vec<f64>> = raw.vector.iter().map(component).collect();
        let Some(vector) = vector else {
            rejects.push(reject("vector has a non-finite or non-numeric component".to_string()));
            continue;
        };
        records.push(EmbeddingRecord {
            entity_id: raw.entity_id,
            kind: raw.kind,
            layer: raw.layer,
            pair_id: raw.pair_id.filter(|s| !s.is_empty()),
            tissue_label: raw.tissue_label.filter(|s| !s.is_empty()),
            vector,
        });
    }
    let Some(header) = header else {
        return Err(EmbedError::MissingHeader {
            path: path.display().to_string(),
        });
    };
    let mut dims: BTreeMap<u32, BTreeSet<usize>> = BTreeMap::new();
    for r in &records {
        dims.entry(r.layer).or_default().insert(r.vector.len());
    }
    if let Some((&layer, d)) = dims.iter().find(|(_, d)| d.len() > 1) {
        return Err(EmbedError::MixedDimensions {
            layer,
            dims: d.iter().copied().collect(),
        });
    }
    Ok(EmbeddingExport {
        model: header.model,
        pooling: header.pooling,
        records,
        rejects,
        total_rows,
    })
}
