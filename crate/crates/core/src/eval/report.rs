use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Scores, counts and a per-item table. `report.json` carries everything but
/// the table, which goes to `items.tsv`; both are byte-deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    /// `None` when a metric has no items to average over.
    pub metrics: BTreeMap<String, Option<f64>>,
    pub counts: BTreeMap<String, u64>,
    pub config: BTreeMap<String, String>,
    #[serde(skip)]
    pub columns: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<Vec<String>>,
}

fn escape(field: &str) -> String {
    field
        .replace('\\', "\\\\")
        .replace('\t', "\\t")
        .replace('\n', "\\n")
        .replace('\r', "\\r")
}

impl EvalReport {
    pub fn new(task: &str, columns: &[&str]) -> Self {
        EvalReport {
            task: task.to_string(),
            metrics: BTreeMap::new(),
            counts: BTreeMap::new(),
            config: BTreeMap::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied().flatten()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_tsv(&self) -> String {
        let mut out = self.columns.join("\t");
        out.push('\n');
        for row in &self.rows {
            let fields: Vec<String> = row.iter().map(|f| escape(f)).collect();
            out.push_str(&fields.join("\t"));
            out.push('\n');
        }
        out
    }

    /// Writes `report.json` and `items.tsv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
        let json = dir.join("report.json");
        std::fs::write(&json, self.to_json()).map_err(|e| EvalError::io(&json, e))?;
        let tsv = dir.join("items.tsv");
        std::fs::write(&tsv, self.to_tsv()).map_err(|e| EvalError::io(&tsv, e))
    }
}
