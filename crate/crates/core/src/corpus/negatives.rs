use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CorpusError;
use crate::store::{GeneId, KnowledgeStore};

const NEGATIVE_STREAM: u64 = 0x6e65_6761_7469_7665;

/// Uniformly samples `round(ratio * |positive_pairs|)` distinct (gene,
/// phenotype) pairs from the complement of the positive set over all stored
/// genes and phenotypes. The result is sorted.
pub fn sample_negatives(store: &KnowledgeStore, ratio: f64, seed: u64) -> Result<Vec<(GeneId, String)>, CorpusError> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(CorpusError::InvalidRatio(ratio));
    }
    let positives = store.positive_pairs();
    let requested = (ratio * positives.len() as f64).round() as usize;
    let genes: Vec<GeneId> = store.genes().map(|g| g.gene_id).collect();
    let phenotypes: Vec<&str> = store.phenotypes().map(|p| p.phenotype_id.as_str()).collect();
    let universe = genes.len() as u128 * phenotypes.len() as u128;
    // positive pairs always reference stored entities
    let available = universe.saturating_sub(positives.len() as u128);
    if requested as u128 > available {
        return Err(CorpusError::NotEnoughNegatives {
            requested,
            available: available.min(usize::MAX as u128) as usize,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ NEGATIVE_STREAM);
    let positive_set: HashSet<(GeneId, &str)> = positives.iter().map(|(g, p)| (*g, p.as_str())).collect();
    let is_positive = |g: usize, p: usize| positive_set.contains(&(genes[g], phenotypes[p]));
    let n_phen = phenotypes.len();

    let mut chosen: Vec<(usize, usize)> = if (requested as u128) * 2 >= available {
        // dense: enumerate the complement and draw an index subset
        let complement: Vec<(usize, usize)> = (0..genes.len())
            .flat_map(|g| (0..n_phen).map(move |p| (g, p)))
            .filter(|&(g, p)| !is_positive(g, p))
            .collect();
        index::sample(&mut rng, complement.len(), requested)
            .into_iter()
            .map(|i| complement[i])
            .collect()
    } else {
        let mut seen = HashSet::with_capacity(requested);
        let mut out = Vec::with_capacity(requested);
        while out.len() < requested {
            let g = rng.random_range(0..genes.len());
            let p = rng.random_range(0..n_phen);
            if !is_positive(g, p) && seen.insert((g, p)) {
                out.push((g, p));
            }
        }
        out
    };
    chosen.sort_unstable();
    Ok(chosen
        .into_iter()
        .map(|(g, p)| (genes[g], phenotypes[p].to_string()))
        .collect())
}
