use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{porter, tokenize, MetricError};

/// Generic words ignored when comparing entity names. Entries are compared
/// after stemming.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stoplist {
    stems: HashSet<String>,
}

pub const DEFAULT_STOPLIST: [&str; 10] = [
    "disease",
    "syndrome",
    "disorder",
    "type",
    "familial",
    "susceptibility",
    "of",
    "the",
    "and",
    "to",
];

impl Default for Stoplist {
    fn default() -> Self {
        Stoplist::new(DEFAULT_STOPLIST)
    }
}

impl Stoplist {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Stoplist {
            stems: words
                .into_iter()
                .flat_map(|w| tokenize(w.as_ref()))
                .map(|t| porter::stem(&t))
                .collect(),
        }
    }

    pub fn empty() -> Self {
        Stoplist { stems: HashSet::new() }
    }

    /// One token per line; blank lines and `#` comments ignored.
    pub fn from_lines(text: &str) -> Self {
        Stoplist::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn contains_stem(&self, stem: &str) -> bool {
        self.stems.contains(stem)
    }
}

/// Tokenize, stem, drop stoplist members, deduplicate keeping first order.
pub fn stem_tokens(name: &str, stoplist: &Stoplist) -> Vec<String> {
    let mut seen = HashSet::new();
    tokenize(name)
        .into_iter()
        .map(|t| porter::stem(&t))
        .filter(|s| !stoplist.contains_stem(s))
        .filter(|s| seen.insert(s.clone()))
        .collect()
}

/// A gold answer entity: canonical name plus accepted synonyms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldEntity {
    pub name: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
}

impl GoldEntity {
    pub fn new(name: impl Into<String>) -> Self {
        GoldEntity {
            name: name.into(),
            synonyms: Vec::new(),
        }
    }

    pub fn with_synonyms(name: impl Into<String>, synonyms: Vec<String>) -> Self {
        GoldEntity {
            name: name.into(),
            synonyms,
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.name.as_str()).chain(self.synonyms.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub matched: bool,
    /// Every gold name reduced to an empty stem set; scored as no match.
    pub indeterminate: bool,
}

/// True when, for some gold entity name or synonym, every stem of that name
/// occurs among the generation's stems.
pub fn entity_match(generation: &str, gold: &[GoldEntity], stoplist: &Stoplist) -> Result<MatchOutcome, MetricError> {
    if gold.is_empty() {
        return Err(MetricError::EmptyGold);
    }
    let generated: HashSet<String> = stem_tokens(generation, &Stoplist::empty()).into_iter().collect();
    let mut any_nonempty = false;
    for entity in gold {
        for name in entity.names() {
            let stems = stem_tokens(name, stoplist);
            if stems.is_empty() {
                continue;
            }
            any_nonempty = true;
            if stems.iter().all(|s| generated.contains(s)) {
                return Ok(MatchOutcome {
                    matched: true,
                    indeterminate: false,
                });
            }
        }
    }
    Ok(MatchOutcome {
        matched: false,
        indeterminate: !any_nonempty,
    })
}
