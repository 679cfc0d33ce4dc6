use crate::par::Execution;
use crate::store::{AssociationEdge, EdgeKey, EdgeKind, EntityRef, GeneId, KnowledgeStore};
use crate::template::{mix64, Slots, Template};
use crate::MASK_TOKEN;

use super::{CorpusExample, CorpusTemplates, ExampleId, Polarity, TaskKind};

/// Compact handle for one example: enough to re-render it on demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExampleKey {
    pub id: ExampleId,
    pub kind: TaskKind,
    pub polarity: Polarity,
    source: u32,
    sub: u32,
}

/// A context that could not be rendered, with the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skip {
    pub kind: TaskKind,
    pub polarity: Polarity,
    pub provenance: Vec<String>,
    pub reason: String,
}

/// Examples sorted by id plus skip accounting.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Rendered {
    pub examples: Vec<CorpusExample>,
    pub skips: Vec<Skip>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Stage1,
    GeneProtein,
    Triples,
}

struct Pair<'a> {
    gene: GeneId,
    phenotype: String,
    edge: Option<&'a AssociationEdge>,
    polarity: Polarity,
}

#[derive(Default)]
struct Fill<'a> {
    gene: &'a str,
    gene_function: String,
    protein: &'a str,
    protein_function: String,
    phenotype: &'a str,
    phenotype_description: &'a str,
    mechanism: &'a str,
    inheritance: String,
}

impl Slots for Fill<'_> {
    fn get(&self, slot: &str) -> Option<&str> {
        Some(match slot {
            "gene" => self.gene,
            "gene_function" => &self.gene_function,
            "protein" => self.protein,
            "protein_function" => &self.protein_function,
            "phenotype" => self.phenotype,
            "phenotype_description" => self.phenotype_description,
            "mechanism" => self.mechanism,
            "inheritance" => &self.inheritance,
            "mask" => MASK_TOKEN,
            _ => return None,
        })
    }
}

/// Replaces every whole-word, ASCII-case-insensitive occurrence of `surface`
/// in `text` with the mask marker. `None` when there is no occurrence.
pub fn mask_surface(text: &str, surface: &str) -> Option<String> {
    let surface = surface.trim();
    if surface.is_empty() {
        return None;
    }
    let t = text.as_bytes();
    let s = surface.as_bytes();
    let need_left = surface.chars().next().is_some_and(char::is_alphanumeric);
    let need_right = surface.chars().next_back().is_some_and(char::is_alphanumeric);
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    let mut i = 0;
    let mut found = false;
    while i + s.len() <= t.len() {
        let hit = text.is_char_boundary(i)
            && text.is_char_boundary(i + s.len())
            && t[i..i + s.len()].eq_ignore_ascii_case(s)
            && !(need_left && text[..i].chars().next_back().is_some_and(char::is_alphanumeric))
            && !(need_right && text[i + s.len()..].chars().next().is_some_and(char::is_alphanumeric));
        if hit {
            out.push_str(&text[last..i]);
            out.push_str(MASK_TOKEN);
            i += s.len();
            last = i;
            found = true;
        } else {
            i += 1;
        }
    }
    if !found {
        return None;
    }
    out.push_str(&text[last..]);
    Some(out)
}

/// Renders examples from a store. Construction gathers the edge lists once;
/// `plan` finds every renderable example and `render` re-creates one from its key.
pub struct Generator<'a> {
    store: &'a KnowledgeStore,
    templates: &'a CorpusTemplates,
    seed: u64,
    gp_edges: Vec<&'a AssociationEdge>,
    protein_edges: Vec<&'a AssociationEdge>,
    pairs: Vec<Pair<'a>>,
}

const SALT_PROMPT: u64 = 0x7072_6f6d;
const SALT_INPUT: u64 = 0x696e_7075;
const SALT_OUTPUT: u64 = 0x6f75_7470;

impl<'a> Generator<'a> {
    /// `negatives` are (gene, phenotype) pairs outside the positive set; with
    /// `verified_only`, positive triples come only from verified edges.
    pub fn new(
        store: &'a KnowledgeStore,
        templates: &'a CorpusTemplates,
        seed: u64,
        negatives: &[(GeneId, String)],
        verified_only: bool,
    ) -> Self {
        let gp_edges: Vec<_> = store.edges_of_kind(EdgeKind::GenePhenotype).collect();
        let protein_edges: Vec<_> = store.edges_of_kind(EdgeKind::GeneProtein).collect();
        let mut pairs = Vec::new();
        for e in &gp_edges {
            if verified_only && !e.verified {
                continue;
            }
            if let (EntityRef::Gene(g), EntityRef::Phenotype(p)) = (&e.subject, &e.object) {
                pairs.push(Pair {
                    gene: *g,
                    phenotype: p.clone(),
                    edge: Some(e),
                    polarity: Polarity::Positive,
                });
            }
        }
        for (g, p) in negatives {
            pairs.push(Pair {
                gene: *g,
                phenotype: p.clone(),
                edge: None,
                polarity: Polarity::Negative,
            });
        }
        Generator {
            store,
            templates,
            seed,
            gp_edges,
            protein_edges,
            pairs,
        }
    }

    pub fn positive_triple_pairs(&self) -> usize {
        self.pairs.iter().filter(|p| p.polarity == Polarity::Positive).count()
    }

    /// Keys of every renderable example across all families, in generation
    /// order, plus skips.
    pub fn plan(&self, exec: Execution) -> (Vec<ExampleKey>, Vec<Skip>) {
        let mut keys = Vec::new();
        let mut skips = Vec::new();
        for family in [Family::Stage1, Family::GeneProtein, Family::Triples] {
            let (k, s) = self.plan_family(family, exec);
            keys.extend(k);
            skips.extend(s);
        }
        (keys, skips)
    }

    fn sources(&self, family: Family) -> usize {
        match family {
            Family::Stage1 => self.gp_edges.len(),
            Family::GeneProtein => self.protein_edges.len(),
            Family::Triples => self.pairs.len(),
        }
    }

    /// (kind, polarity, sub) jobs derived from one source item.
    fn jobs(&self, family: Family, source: usize) -> Vec<(TaskKind, Polarity, u32)> {
        match family {
            Family::Stage1 => vec![
                (TaskKind::MaskedGene, Polarity::Positive, 0),
                (TaskKind::MaskedPhenotype, Polarity::Positive, 0),
            ],
            Family::GeneProtein => [
                TaskKind::GeneProteinFunc,
                TaskKind::GeneProduct,
                TaskKind::ProteinFuncInfer,
                TaskKind::GeneFuncInfer,
            ]
            .into_iter()
            .map(|k| (k, Polarity::Positive, 0))
            .collect(),
            Family::Triples => {
                let pair = &self.pairs[source];
                let n = self.store.proteins_of_gene(pair.gene).len().max(1) as u32;
                let mut jobs = Vec::new();
                for kind in [TaskKind::ProtMolecular, TaskKind::ProtPathogenesis] {
                    jobs.extend((0..n).map(|sub| (kind, pair.polarity, sub)));
                }
                jobs.push((TaskKind::GeneInheritance, pair.polarity, 0));
                jobs
            }
        }
    }

    fn plan_family(&self, family: Family, exec: Execution) -> (Vec<ExampleKey>, Vec<Skip>) {
        let per_source = exec.map_range(self.sources(family), |source| {
            self.jobs(family, source)
                .into_iter()
                .map(|(kind, polarity, sub)| {
                    self.render_job(kind, polarity, source as u32, sub)
                        .map(|ex| ExampleKey {
                            id: ex.example_id,
                            kind,
                            polarity,
                            source: source as u32,
                            sub,
                        })
                })
                .collect::<Vec<_>>()
        });
        let mut keys = Vec::new();
        let mut skips = Vec::new();
        for r in per_source.into_iter().flatten() {
            match r {
                Ok(k) => keys.push(k),
                Err(s) => skips.push(s),
            }
        }
        (keys, skips)
    }

    fn render_family(&self, family: Family, exec: Execution) -> Rendered {
        let (keys, skips) = self.plan_family(family, exec);
        let mut examples = exec.map(&keys, |k| self.render(k));
        examples.sort_by_key(|e| e.example_id);
        Rendered { examples, skips }
    }

    /// Re-renders a planned example.
    pub fn render(&self, key: &ExampleKey) -> CorpusExample {
        self.render_job(key.kind, key.polarity, key.source, key.sub)
            .expect("planned keys render")
    }

    fn pick<'t>(&self, variants: &'t [Template], id: &ExampleId, salt: u64) -> &'t Template {
        let h = mix64(id.prefix_u64() ^ mix64(self.seed ^ salt));
        &variants[(h % variants.len() as u64) as usize]
    }

    fn render_job(&self, kind: TaskKind, polarity: Polarity, source: u32, sub: u32) -> Result<CorpusExample, Skip> {
        let store = self.store;
        let mut fill = Fill::default();
        let mut provenance = Vec::with_capacity(3);
        let skip = |provenance: &Vec<String>, reason: String| Skip {
            kind,
            polarity,
            provenance: provenance.clone(),
            reason,
        };
        let mut mask: Option<String> = None;
        let required: &[&str];

        match kind {
            TaskKind::MaskedGene | TaskKind::MaskedPhenotype => {
                let edge = self.gp_edges[source as usize];
                let (gene, phen) = match (&edge.subject, &edge.object) {
                    (EntityRef::Gene(g), EntityRef::Phenotype(p)) => (
                        store.gene(*g).expect("edge endpoints resolve"),
                        store.phenotype(p).expect("edge endpoints resolve"),
                    ),
                    _ => unreachable!("gene-phenotype edge endpoints"),
                };
                provenance.push(edge.subject.to_string());
                provenance.push(edge.object.to_string());
                fill.gene = &gene.symbol;
                fill.gene_function = gene.function_text();
                fill.phenotype = &phen.name;
                fill.phenotype_description = &phen.description;
                required = &["gene", "phenotype"];
                mask = Some(if kind == TaskKind::MaskedGene {
                    gene.symbol.clone()
                } else {
                    phen.name.clone()
                });
            }
            TaskKind::GeneProteinFunc
            | TaskKind::GeneProduct
            | TaskKind::ProteinFuncInfer
            | TaskKind::GeneFuncInfer => {
                let edge = self.protein_edges[source as usize];
                let (gene, protein) = match (&edge.subject, &edge.object) {
                    (EntityRef::Gene(g), EntityRef::Protein(p)) => (
                        store.gene(*g).expect("edge endpoints resolve"),
                        store.protein(p).expect("edge endpoints resolve"),
                    ),
                    _ => unreachable!("gene-protein edge endpoints"),
                };
                provenance.push(edge.subject.to_string());
                provenance.push(edge.object.to_string());
                fill.gene = &gene.symbol;
                fill.gene_function = gene.function_text();
                fill.protein = protein.display_name();
                fill.protein_function = protein.molecular_functions.join("; ");
                required = match kind {
                    TaskKind::GeneProteinFunc | TaskKind::ProteinFuncInfer => &["gene", "protein", "protein_function"],
                    TaskKind::GeneFuncInfer => &["gene", "gene_function"],
                    _ => &["gene", "protein"],
                };
            }
            TaskKind::ProtMolecular | TaskKind::ProtPathogenesis | TaskKind::GeneInheritance => {
                let pair = &self.pairs[source as usize];
                let gene = store.gene(pair.gene).expect("pair gene resolves");
                let phen = store.phenotype(&pair.phenotype).expect("pair phenotype resolves");
                provenance.push(EntityRef::Gene(pair.gene).to_string());
                fill.gene = &gene.symbol;
                fill.gene_function = gene.function_text();
                fill.phenotype = &phen.name;
                fill.phenotype_description = &phen.description;
                fill.inheritance = phen.inheritance_facts.join("; ");
                if kind == TaskKind::GeneInheritance {
                    required = &["gene", "phenotype", "inheritance"];
                } else {
                    let proteins = store.proteins_of_gene(pair.gene);
                    let Some(acc) = proteins.get(sub as usize) else {
                        provenance.push(EntityRef::Phenotype(pair.phenotype.clone()).to_string());
                        return Err(skip(&provenance, "gene has no protein product".to_string()));
                    };
                    let protein = store.protein(acc).expect("linked protein resolves");
                    provenance.push(EntityRef::Protein(acc.clone()).to_string());
                    fill.protein = protein.display_name();
                    fill.protein_function = protein.molecular_functions.join("; ");
                    if kind == TaskKind::ProtMolecular {
                        required = &["gene", "protein", "phenotype", "protein_function"];
                    } else {
                        let protein_edge = store.edge(&EdgeKey {
                            kind: EdgeKind::ProteinPhenotype,
                            subject: EntityRef::Protein(acc.clone()),
                            object: EntityRef::Phenotype(pair.phenotype.clone()),
                        });
                        fill.mechanism = protein_edge
                            .and_then(|e| e.evidence.as_deref())
                            .or_else(|| pair.edge.and_then(|e| e.evidence.as_deref()))
                            .filter(|s| !s.trim().is_empty())
                            .unwrap_or(&phen.description);
                        required = &["gene", "protein", "phenotype", "mechanism"];
                    }
                }
                provenance.push(EntityRef::Phenotype(pair.phenotype.clone()).to_string());
            }
        }

        if let Some(slot) = required
            .iter()
            .find(|s| fill.get(s).is_none_or(|v| v.trim().is_empty()))
        {
            return Err(skip(&provenance, format!("missing {slot}")));
        }

        let id = ExampleId::compute(kind, polarity, &provenance);
        let file = self.templates.file(kind);
        let section = |name: &str| file.section(name).expect("checked at load");
        let task_prompt = self.pick(section("task_prompt"), &id, SALT_PROMPT).render(&fill);
        let mut input = self.pick(section("input"), &id, SALT_INPUT).render(&fill);
        let output_section = match polarity {
            Polarity::Positive => "output",
            Polarity::Negative => "negative_output",
        };
        let output = self.pick(section(output_section), &id, SALT_OUTPUT).render(&fill);

        if let Some(surface) = mask {
            match mask_surface(&input, &surface) {
                Some(masked) => input = masked,
                None => return Err(skip(&provenance, "surface form not found in input".to_string())),
            }
            if output.contains(MASK_TOKEN) {
                return Err(skip(&provenance, "output contains the mask marker".to_string()));
            }
        }
        if output.trim().is_empty() {
            return Err(skip(&provenance, "empty output".to_string()));
        }
        Ok(CorpusExample {
            example_id: id,
            stage: kind.stage(),
            task_kind: kind,
            polarity,
            task_prompt,
            input,
            output,
            provenance,
        })
    }
}

/// MASKED_GENE and MASKED_PHENOTYPE examples, one of each per gene-phenotype edge.
pub fn render_stage1(store: &KnowledgeStore, templates: &CorpusTemplates, seed: u64, exec: Execution) -> Rendered {
    Generator::new(store, templates, seed, &[], false).render_family(Family::Stage1, exec)
}

/// The four gene-protein kinds, one of each per gene-protein edge.
pub fn render_gene_protein(
    store: &KnowledgeStore,
    templates: &CorpusTemplates,
    seed: u64,
    exec: Execution,
) -> Rendered {
    Generator::new(store, templates, seed, &[], false).render_family(Family::GeneProtein, exec)
}

/// Triple kinds for every positive pair and every given negative pair.
pub fn render_triples(
    store: &KnowledgeStore,
    templates: &CorpusTemplates,
    seed: u64,
    negatives: &[(GeneId, String)],
    verified_only: bool,
    exec: Execution,
) -> Rendered {
    Generator::new(store, templates, seed, negatives, verified_only).render_family(Family::Triples, exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{AssociationEdge, GeneRecord, PhenotypeRecord, ProteinRecord, Source};

    fn fixture() -> KnowledgeStore {
        let mut b = KnowledgeStore::builder();
        let mut app = GeneRecord::new(351, "APP");
        app.functions = vec!["cell surface receptor".into()];
        b.upsert_gene(app).unwrap();
        b.upsert_gene(GeneRecord::new(5663, "PSEN1")).unwrap();
        let mut ad = PhenotypeRecord::new("104300", "Alzheimer disease");
        ad.inheritance_facts = vec!["Autosomal dominant".into()];
        b.upsert_phenotype(ad).unwrap();
        b.upsert_phenotype(PhenotypeRecord::new("607822", "")).unwrap();
        b.upsert_protein(ProteinRecord {
            accession: "P05067".into(),
            name: "Amyloid-beta precursor protein".into(),
            coding_gene_id: 351,
            molecular_functions: vec!["heparin binding".into()],
        })
        .unwrap();
        b.upsert_protein(ProteinRecord {
            accession: "P49768".into(),
            name: "Presenilin-1".into(),
            coding_gene_id: 5663,
            molecular_functions: vec![],
        })
        .unwrap();
        b.link_edge(AssociationEdge::gene_phenotype(351, "104300", Source::OmimLike))
            .unwrap();
        b.link_edge(AssociationEdge::gene_phenotype(5663, "607822", Source::OmimLike))
            .unwrap();
        for (g, p) in [(351, "P05067"), (5663, "P49768")] {
            b.link_edge(AssociationEdge::new(
                EntityRef::Gene(g),
                EntityRef::Protein(p.into()),
                EdgeKind::GeneProtein,
                Source::UniprotLike,
            ))
            .unwrap();
        }
        b.freeze()
    }

    #[test]
    fn masking_is_whole_word_and_case_insensitive() {
        assert_eq!(
            mask_surface("APP and app, not APPL or MAPP.", "APP").unwrap(),
            "<mask> and <mask>, not APPL or MAPP."
        );
        assert!(mask_surface("nothing here", "APP").is_none());
        assert_eq!(mask_surface("(x) y", "(x)").unwrap(), "<mask> y");
    }

    #[test]
    fn stage1_masks_gene_and_skips_nameless_phenotype() {
        let store = fixture();
        let t = CorpusTemplates::defaults();
        let r = render_stage1(&store, &t, 7, Execution::Sequential);
        assert_eq!(r.examples.len(), 2);
        let gene = r.examples.iter().find(|e| e.task_kind == TaskKind::MaskedGene).unwrap();
        assert!(gene.input.contains("<mask>"));
        assert!(!gene.input.contains("APP"));
        assert_eq!(gene.output, "APP");
        let block = gene.instruction_block();
        assert!(block.starts_with("### Instruction:\n"));
        assert!(block.contains("\n### Input:\n") && block.contains("\n### Response:\nAPP"));
        assert_eq!(r.skips.len(), 2);
        assert!(r.skips.iter().all(|s| s.reason == "missing phenotype"));
    }

    #[test]
    fn gene_protein_kinds_and_skips() {
        let store = fixture();
        let t = CorpusTemplates::defaults();
        let r = render_gene_protein(&store, &t, 7, Execution::Sequential);
        let app: Vec<_> = r
            .examples
            .iter()
            .filter(|e| e.provenance[0] == "gene:351")
            .map(|e| e.task_kind)
            .collect();
        assert_eq!(app.len(), 4);
        let reasons: Vec<_> = r.skips.iter().map(|s| (s.kind, s.reason.as_str())).collect();
        assert!(reasons.contains(&(TaskKind::ProteinFuncInfer, "missing protein_function")));
        assert!(reasons.contains(&(TaskKind::GeneFuncInfer, "missing gene_function")));
    }

    #[test]
    fn triples_have_both_polarities() {
        let store = fixture();
        let t = CorpusTemplates::defaults();
        let negatives = vec![(5663, "104300".to_string())];
        let r = render_triples(&store, &t, 7, &negatives, false, Execution::Sequential);
        let pos = r
            .examples
            .iter()
            .find(|e| e.task_kind == TaskKind::ProtMolecular && e.polarity == Polarity::Positive)
            .unwrap();
        assert!(pos.output.contains("Alzheimer disease"));
        assert_eq!(pos.provenance, ["gene:351", "protein:P05067", "phenotype:104300"]);
        let neg = r
            .examples
            .iter()
            .find(|e| e.task_kind == TaskKind::GeneInheritance && e.polarity == Polarity::Negative)
            .unwrap();
        assert!(neg.output.contains("not"));
        // PSEN1's protein has no molecular functions
        assert!(r
            .skips
            .iter()
            .any(|s| s.kind == TaskKind::ProtMolecular && s.polarity == Polarity::Negative));
    }

    #[test]
    fn rendering_is_seed_deterministic_and_strategy_independent() {
        let store = fixture();
        let t = CorpusTemplates::defaults();
        let a = render_stage1(&store, &t, 11, Execution::Sequential);
        let b = render_stage1(&store, &t, 11, Execution::Parallel);
        assert_eq!(a, b);
    }
}
