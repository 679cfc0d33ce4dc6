use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::ingest::EvidenceRecord;
use crate::metrics::tokenize;
use crate::store::{AssociationEdge, KnowledgeStore, Source};
use crate::template::{mix64, TemplateFile};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationItem {
    pub item_id: String,
    pub gene: String,
    pub disease: String,
    pub evidence: String,
    pub gold: bool,
    pub prompt_variants: Vec<String>,
}

/// Outcome of checking evidence labels against the store's positive pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreeningReport {
    pub total: usize,
    pub kept: usize,
    /// Labeled related, but the pair is not a stored association.
    pub dropped_positive_absent: usize,
    /// Labeled unrelated, but the pair is a stored association.
    pub dropped_negative_present: usize,
}

impl ScreeningReport {
    pub fn dropped(&self) -> usize {
        self.dropped_positive_absent + self.dropped_negative_present
    }
}

/// Prompt phrasings for relation questions, from a template file with a
/// single `[prompt]` section and slots `gene`, `disease`, `evidence`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationVariants {
    file: TemplateFile,
    pub digest: String,
}

impl Default for RelationVariants {
    fn default() -> Self {
        Self::parse(
            "relation_variants.txt",
            include_str!("../../templates/relation_variants.txt"),
        )
        .expect("embedded variants are valid")
    }
}

impl RelationVariants {
    pub fn parse(name: &str, text: &str) -> Result<Self, EvalError> {
        let file = TemplateFile::parse(name, text)?;
        file.check(&["prompt"], &[], &["gene", "disease", "evidence"])?;
        Ok(RelationVariants {
            file,
            digest: crate::sha256_hex(text),
        })
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
        Self::parse(&path.display().to_string(), &text)
    }

    pub fn len(&self) -> usize {
        self.file.section("prompt").map_or(0, <[_]>::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn is_stored_pair(store: &KnowledgeStore, gene: &str, disease: &str) -> bool {
    let (Some(g), Some(p)) = (store.resolve_gene(gene), store.resolve_phenotype(disease)) else {
        return false;
    };
    let key = AssociationEdge::gene_phenotype(g.gene_id, p.phenotype_id.clone(), Source::OmimLike).key();
    store.edge(&key).is_some()
}

/// Keeps the evidence rows whose label agrees with the store: related rows
/// need a stored gene-phenotype edge, unrelated rows need its absence. Names
/// that do not resolve count as absent. Each kept item carries `variants_k`
/// distinct phrasings chosen per item from `variants`.
pub fn make_relation_items(
    evidence: &[EvidenceRecord],
    store: &KnowledgeStore,
    variants: &RelationVariants,
    variants_k: usize,
    seed: u64,
) -> Result<(Vec<RelationItem>, ScreeningReport), EvalError> {
    let templates = variants.file.section("prompt").unwrap_or(&[]);
    if variants_k < 1 || variants_k > templates.len() {
        return Err(EvalError::VariantCount {
            requested: variants_k,
            available: templates.len(),
        });
    }
    let mut report = ScreeningReport {
        total: evidence.len(),
        ..Default::default()
    };
    let mut items = Vec::new();
    for (idx, rec) in evidence.iter().enumerate() {
        let stored = is_stored_pair(store, &rec.gene_symbol, &rec.disease_name);
        match (rec.label, stored) {
            (true, false) => {
                report.dropped_positive_absent += 1;
                continue;
            }
            (false, true) => {
                report.dropped_negative_present += 1;
                continue;
            }
            _ => {}
        }
        report.kept += 1;
        let item_id = format!("rel-{:06}", idx + 1);
        let item_hash = mix64(idx as u64);
        let mut order: Vec<usize> = (0..templates.len()).collect();
        order.sort_by_key(|&i| (mix64(item_hash ^ mix64(seed) ^ i as u64), i));
        let slots = [
            ("gene", rec.gene_symbol.as_str()),
            ("disease", rec.disease_name.as_str()),
            ("evidence", rec.sentence.as_str()),
        ];
        let prompt_variants = order[..variants_k]
            .iter()
            .map(|&i| templates[i].render(&slots))
            .collect();
        items.push(RelationItem {
            item_id,
            gene: rec.gene_symbol.clone(),
            disease: rec.disease_name.clone(),
            evidence: rec.sentence.clone(),
            gold: rec.label,
            prompt_variants,
        });
    }
    Ok((items, report))
}

/// Parsed yes/no answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum YesNo {
    Yes,
    No,
    Unparseable,
}

impl YesNo {
    pub fn label(self) -> &'static str {
        match self {
            YesNo::Yes => "YES",
            YesNo::No => "NO",
            YesNo::Unparseable => "UNPARSEABLE",
        }
    }

    pub fn from_bool(b: bool) -> Self {
        if b {
            YesNo::Yes
        } else {
            YesNo::No
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct YesNoKeywords {
    pub affirmative: HashSet<String>,
    pub negative: HashSet<String>,
}

impl Default for YesNoKeywords {
    fn default() -> Self {
        YesNoKeywords {
            affirmative: ["yes", "true", "associated"].map(String::from).into(),
            negative: ["no", "not", "false", "unrelated"].map(String::from).into(),
        }
    }
}

impl YesNoKeywords {
    /// One keyword per line; blank lines and `#` comments ignored.
    pub fn from_lines(affirmative: &str, negative: &str) -> Self {
        let read = |text: &str| {
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect()
        };
        YesNoKeywords {
            affirmative: read(affirmative),
            negative: read(negative),
        }
    }
}

/// The first token found in either keyword set decides the answer.
pub fn parse_yesno(raw_text: &str, keywords: &YesNoKeywords) -> YesNo {
    for token in tokenize(raw_text) {
        if keywords.affirmative.contains(&token) {
            return YesNo::Yes;
        }
        if keywords.negative.contains(&token) {
            return YesNo::No;
        }
    }
    YesNo::Unparseable
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Aggregation {
    /// Gold label if any variant produced it, otherwise the majority.
    #[default]
    OracleBest,
    Majority,
}

impl Aggregation {
    pub fn label(self) -> &'static str {
        match self {
            Aggregation::OracleBest => "ORACLE_BEST",
            Aggregation::Majority => "MAJORITY",
        }
    }
}

fn majority(parsed: &[YesNo]) -> YesNo {
    let yes = parsed.iter().filter(|&&p| p == YesNo::Yes).count();
    let no = parsed.iter().filter(|&&p| p == YesNo::No).count();
    match yes.cmp(&no) {
        std::cmp::Ordering::Greater => YesNo::Yes,
        std::cmp::Ordering::Less => YesNo::No,
        std::cmp::Ordering::Equal => YesNo::Unparseable,
    }
}

/// Combines the parsed answers of one item's prompt variants.
pub fn aggregate_mixed(item_id: &str, parsed: &[YesNo], gold: bool, mode: Aggregation) -> Result<YesNo, EvalError> {
    if parsed.is_empty() {
        return Err(EvalError::NoAnswers(item_id.to_string()));
    }
    Ok(match mode {
        Aggregation::OracleBest if parsed.contains(&YesNo::from_bool(gold)) => YesNo::from_bool(gold),
        _ => majority(parsed),
    })
}
