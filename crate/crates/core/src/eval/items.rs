use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::metrics::GoldEntity;
use crate::store::{EntityRef, GeneId, KnowledgeStore};

const QA_STREAM: u64 = 0x7161_5f69_7465_6d73;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Direction {
    /// Disease in the prompt, genes expected in the answer.
    PhenoToGene,
    /// Gene in the prompt, diseases expected in the answer.
    GeneToPheno,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::PhenoToGene => "PHENO_TO_GENE",
            Direction::GeneToPheno => "GENE_TO_PHENO",
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Direction::PhenoToGene => "p2g",
            Direction::GeneToPheno => "g2p",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Style {
    Question,
    Completion,
}

impl Style {
    pub fn label(self) -> &'static str {
        match self {
            Style::Question => "QUESTION",
            Style::Completion => "COMPLETION",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaItem {
    pub item_id: String,
    pub direction: Direction,
    pub style: Style,
    pub prompt_text: String,
    pub gold_entities: Vec<GoldEntity>,
    /// Shortest gold name, the reference for keyword BLEU-1.
    pub keyword_reference: String,
    /// One reference answer sentence per gold entity, used for BLEU.
    pub gold_sentences: Vec<String>,
}

fn prompt(direction: Direction, style: Style, focus: &str) -> String {
    match (direction, style) {
        (Direction::PhenoToGene, Style::Question) => format!("What are genes related to {focus}?"),
        (Direction::PhenoToGene, Style::Completion) => {
            format!("The name of the gene related to {focus} is")
        }
        (Direction::GeneToPheno, Style::Question) => format!("What are diseases related to {focus}?"),
        (Direction::GeneToPheno, Style::Completion) => {
            format!("The name of the disease related to {focus} is")
        }
    }
}

fn gold_sentence(direction: Direction, style: Style, prompt: &str, focus: &str, gold: &str) -> String {
    match (style, direction) {
        (Style::Completion, _) => format!("{prompt} {gold}."),
        (Style::Question, Direction::PhenoToGene) => format!("{gold} is related to {focus}."),
        (Style::Question, Direction::GeneToPheno) => format!("{focus} is related to {gold}."),
    }
}

/// Samples `n` distinct gene-phenotype pairs and turns each into a QA item
/// whose gold set holds every entity associated with the prompt's entity.
/// Pairs whose phenotype has no name are not eligible.
pub fn make_qa_items(
    store: &KnowledgeStore,
    n: usize,
    seed: u64,
    direction: Direction,
    style: Style,
) -> Result<Vec<QaItem>, EvalError> {
    let pairs: Vec<(GeneId, &str)> = store
        .positive_pairs()
        .into_iter()
        .filter_map(|(g, p)| {
            let phen = store.phenotype(&p)?;
            (!phen.name.trim().is_empty()).then_some((g, phen.phenotype_id.as_str()))
        })
        .collect();
    if n > pairs.len() {
        return Err(EvalError::NotEnoughPairs {
            requested: n,
            available: pairs.len(),
        });
    }

    let mut genes_of: BTreeMap<&str, Vec<GeneId>> = BTreeMap::new();
    let mut phenotypes_of: BTreeMap<GeneId, Vec<&str>> = BTreeMap::new();
    for &(g, p) in &pairs {
        genes_of.entry(p).or_default().push(g);
        phenotypes_of.entry(g).or_default().push(p);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ QA_STREAM ^ direction as u64);
    let mut chosen = index::sample(&mut rng, pairs.len(), n).into_vec();
    chosen.sort_unstable();

    let items = chosen
        .into_iter()
        .map(|i| {
            let (g, p) = pairs[i];
            let gene = store.gene(g).expect("pair gene resolves");
            let phen = store.phenotype(p).expect("pair phenotype resolves");
            let (focus, gold_entities): (&str, Vec<GoldEntity>) = match direction {
                Direction::PhenoToGene => (
                    &phen.name,
                    genes_of[p]
                        .iter()
                        .map(|&id| {
                            let r = store.gene(id).expect("gene resolves");
                            GoldEntity::with_synonyms(r.symbol.clone(), r.synonyms.clone())
                        })
                        .collect(),
                ),
                Direction::GeneToPheno => (
                    &gene.symbol,
                    phenotypes_of[&g]
                        .iter()
                        .map(|id| {
                            let r = store.phenotype(id).expect("phenotype resolves");
                            GoldEntity::with_synonyms(r.name.clone(), r.synonyms.clone())
                        })
                        .collect(),
                ),
            };
            let prompt_text = prompt(direction, style, focus);
            let keyword_reference = gold_entities
                .iter()
                .map(|e| e.name.as_str())
                .min_by_key(|s| (s.chars().count(), *s))
                .expect("gold set nonempty")
                .to_string();
            let gold_sentences = gold_entities
                .iter()
                .map(|e| gold_sentence(direction, style, &prompt_text, focus, &e.name))
                .collect();
            QaItem {
                item_id: format!("{}:{}", direction.tag(), pair_tag(g, p)),
                direction,
                style,
                prompt_text,
                gold_entities,
                keyword_reference,
                gold_sentences,
            }
        })
        .collect();
    Ok(items)
}

fn pair_tag(g: GeneId, p: &str) -> String {
    format!("{}|{}", EntityRef::Gene(g), EntityRef::Phenotype(p.to_string()))
}
