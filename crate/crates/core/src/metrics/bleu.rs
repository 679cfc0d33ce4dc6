use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{MetricError, TokenizedText};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    None,
    /// Zero-match orders get (0 + 1) / (total + 1).
    #[default]
    AddOne,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BleuScore {
    pub score: f64,
    /// Set when the candidate had no tokens.
    pub empty_candidate: bool,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-free sentence BLEU: geometric mean of clipped n-gram precisions
/// times the brevity penalty against the closest reference length.
///
/// Orders longer than the candidate are left out of the mean, so
/// `bleu(x, [x]) == 1` for every nonempty `x`.
pub fn bleu(
    candidate: &TokenizedText,
    references: &[TokenizedText],
    max_n: usize,
    smoothing: Smoothing,
) -> Result<BleuScore, MetricError> {
    if max_n == 0 {
        return Err(MetricError::ZeroOrder);
    }
    if references.is_empty() || references.iter().any(TokenizedText::is_empty) {
        return Err(MetricError::NoReference);
    }
    let cand = candidate.tokens();
    if cand.is_empty() {
        return Ok(BleuScore {
            score: 0.0,
            empty_candidate: true,
        });
    }
    let c = cand.len();
    let orders = max_n.min(c);
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let cand_counts = ngram_counts(cand, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in references {
            for (g, k) in ngram_counts(r.tokens(), n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(k);
            }
        }
        let clipped: usize = cand_counts
            .iter()
            .map(|(g, &k)| k.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let total = c - n + 1;
        let p = if clipped > 0 {
            clipped as f64 / total as f64
        } else {
            match smoothing {
                Smoothing::None => {
                    return Ok(BleuScore {
                        score: 0.0,
                        empty_candidate: false,
                    })
                }
                Smoothing::AddOne => 1.0 / (total as f64 + 1.0),
            }
        };
        log_sum += p.ln();
    }
    // closest reference length, ties to the shorter one
    let r = references
        .iter()
        .map(TokenizedText::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(c);
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Ok(BleuScore {
        score: bp * (log_sum / orders as f64).exp(),
        empty_candidate: false,
    })
}

/// Clipped unigram precision of the candidate against a reference made of
/// the entity name alone, with no brevity penalty.
pub fn keyword_bleu1(candidate: &TokenizedText, keyword: &TokenizedText) -> Result<f64, MetricError> {
    if keyword.is_empty() {
        return Err(MetricError::EmptyKeyword);
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let kw = ngram_counts(keyword.tokens(), 1);
    let clipped: usize = ngram_counts(candidate.tokens(), 1)
        .iter()
        .map(|(g, &k)| k.min(kw.get(g).copied().unwrap_or(0)))
        .sum();
    Ok(clipped as f64 / candidate.len() as f64)
}
