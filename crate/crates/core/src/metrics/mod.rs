//! Scores used for QA and relation-determination evaluation.
//!
//! All functions are pure; tokenization is lowercase runs of Unicode letters
//! and digits, so punctuation and hyphens split tokens.

mod bleu;
mod entity;
pub mod porter;

pub use bleu::{bleu, keyword_bleu1, BleuScore, Smoothing};
pub use entity::{entity_match, stem_tokens, GoldEntity, MatchOutcome, Stoplist};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("max_n must be at least 1")]
    ZeroOrder,
    #[error("at least one nonempty reference is required")]
    NoReference,
    #[error("keyword reference is empty")]
    EmptyKeyword,
    #[error("gold entity list is empty")]
    EmptyGold,
    #[error("confusion counts are all zero")]
    EmptyConfusion,
}

/// Splits text into lowercase letter/digit runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Lowercase tokens with no empty entries.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenizedText(Vec<String>);

impl TokenizedText {
    pub fn new(text: &str) -> Self {
        TokenizedText(tokenize(text))
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<&str> for TokenizedText {
    fn from(text: &str) -> Self {
        TokenizedText::new(text)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Tallies (predicted positive, actually positive) pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = ConfusionCounts::default();
        for (pred, gold) in pairs {
            match (pred, gold) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall, accuracy and F1; 0/0 is taken as 0.
pub fn confusion_metrics(c: &ConfusionCounts) -> Result<ConfusionMetrics, MetricError> {
    if c.total() == 0 {
        return Err(MetricError::EmptyConfusion);
    }
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let accuracy = ratio(c.tp + c.tn, c.total());
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(ConfusionMetrics {
        precision,
        recall,
        accuracy,
        f1,
    })
}
