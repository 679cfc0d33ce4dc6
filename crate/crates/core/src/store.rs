//! Cross-referenced store of genes, proteins, phenotypes and association edges.
//!
//! Records are collected in a [`StoreBuilder`] (single writer) and then frozen
//! into an immutable [`KnowledgeStore`] that every downstream module reads.
//! Merging is commutative: conflicting scalar fields resolve to a canonical
//! choice and list fields are kept as sorted sets, so the frozen store does
//! not depend on the order in which records arrived.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub type GeneId = u64;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("invalid {record} record: {field} {reason}")]
    Invalid {
        record: &'static str,
        field: &'static str,
        reason: String,
    },
    #[error("dangling endpoint: {0} is not in the store")]
    Dangling(EntityRef),
    #[error("edge kind {kind:?} cannot connect {subject} to {object}")]
    EndpointKind {
        kind: EdgeKind,
        subject: EntityRef,
        object: EntityRef,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
}

impl StoreError {
    fn invalid(record: &'static str, field: &'static str, reason: impl Into<String>) -> Self {
        StoreError::Invalid {
            record,
            field,
            reason: reason.into(),
        }
    }
}

/// Sorts and deduplicates a list in place.
pub(crate) fn canonical_set(items: &mut Vec<String>) {
    items.retain(|s| !s.trim().is_empty());
    items.sort();
    items.dedup();
}

fn union_into(dst: &mut Vec<String>, src: &[String]) {
    dst.extend(src.iter().cloned());
    canonical_set(dst);
}

/// Prefers the longer text; ties break lexicographically.
fn richer_text(a: &str, b: &str) -> String {
    match a.len().cmp(&b.len()) {
        std::cmp::Ordering::Greater => a.to_string(),
        std::cmp::Ordering::Less => b.to_string(),
        std::cmp::Ordering::Equal => a.min(b).to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneRecord {
    pub gene_id: GeneId,
    pub symbol: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
    #[serde(default)]
    pub summary: String,
    #[serde(default)]
    pub functions: Vec<String>,
}

impl GeneRecord {
    pub fn new(gene_id: GeneId, symbol: impl Into<String>) -> Self {
        GeneRecord {
            gene_id,
            symbol: symbol.into(),
            synonyms: Vec::new(),
            summary: String::new(),
            functions: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        if self.gene_id == 0 {
            return Err(StoreError::invalid("gene", "gene_id", "must be positive"));
        }
        if self.symbol.trim().is_empty() {
            return Err(StoreError::invalid("gene", "symbol", "must be nonempty"));
        }
        let mut seen = BTreeSet::new();
        for s in &self.synonyms {
            if s == &self.symbol {
                return Err(StoreError::invalid(
                    "gene",
                    "synonyms",
                    format!("must not contain the symbol {s:?}"),
                ));
            }
            if !seen.insert(s) {
                return Err(StoreError::invalid(
                    "gene",
                    "synonyms",
                    format!("contain duplicate {s:?}"),
                ));
            }
        }
        Ok(())
    }

    /// Symbol, then synonyms.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.symbol.as_str()).chain(self.synonyms.iter().map(String::as_str))
    }

    /// Function statements joined, falling back to the summary.
    pub fn function_text(&self) -> String {
        if self.functions.is_empty() {
            self.summary.trim().to_string()
        } else {
            self.functions.join("; ")
        }
    }

    fn merge(&mut self, other: GeneRecord) {
        if other.symbol != self.symbol {
            // the lexicographically smaller symbol stays canonical
            let (keep, demote) = if other.symbol < self.symbol {
                (other.symbol, std::mem::take(&mut self.symbol))
            } else {
                (self.symbol.clone(), other.symbol)
            };
            self.symbol = keep;
            self.synonyms.push(demote);
        }
        union_into(&mut self.synonyms, &other.synonyms);
        let symbol = self.symbol.clone();
        self.synonyms.retain(|s| *s != symbol);
        union_into(&mut self.functions, &other.functions);
        self.summary = richer_text(&self.summary, &other.summary);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProteinRecord {
    pub accession: String,
    #[serde(default)]
    pub name: String,
    pub coding_gene_id: GeneId,
    #[serde(default)]
    pub molecular_functions: Vec<String>,
}

impl ProteinRecord {
    pub fn validate(&self) -> Result<(), StoreError> {
        if self.accession.trim().is_empty() {
            return Err(StoreError::invalid("protein", "accession", "must be nonempty"));
        }
        if self.coding_gene_id == 0 {
            return Err(StoreError::invalid("protein", "coding_gene_id", "must be positive"));
        }
        Ok(())
    }

    /// Display name, falling back to the accession.
    pub fn display_name(&self) -> &str {
        if self.name.trim().is_empty() {
            &self.accession
        } else {
            &self.name
        }
    }

    fn merge(&mut self, other: ProteinRecord) {
        self.name = richer_text(&self.name, &other.name);
        self.coding_gene_id = self.coding_gene_id.min(other.coding_gene_id);
        union_into(&mut self.molecular_functions, &other.molecular_functions);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhenotypeRecord {
    pub phenotype_id: String,
    #[serde(default)]
    pub name: String,
    /// Alternative names, including names reported by other sources.
    #[serde(default)]
    pub synonyms: Vec<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub inheritance_facts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tissue_label: Option<String>,
}

impl PhenotypeRecord {
    pub fn new(phenotype_id: impl Into<String>, name: impl Into<String>) -> Self {
        PhenotypeRecord {
            phenotype_id: phenotype_id.into(),
            name: name.into(),
            synonyms: Vec::new(),
            description: String::new(),
            inheritance_facts: Vec::new(),
            tissue_label: None,
        }
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        if self.phenotype_id.trim().is_empty() {
            return Err(StoreError::invalid("phenotype", "phenotype_id", "must be nonempty"));
        }
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.name.as_str())
            .chain(self.synonyms.iter().map(String::as_str))
            .filter(|s| !s.trim().is_empty())
    }

    fn merge(&mut self, other: PhenotypeRecord) {
        // Conflicting names across sources are all kept; the smallest
        // nonempty one is the display name.
        let mut names: Vec<String> = self.names().chain(other.names()).map(str::to_string).collect();
        canonical_set(&mut names);
        if let Some(first) = names.first().cloned() {
            self.name = first;
            self.synonyms = names.into_iter().skip(1).collect();
        }
        self.description = richer_text(&self.description, &other.description);
        union_into(&mut self.inheritance_facts, &other.inheritance_facts);
        self.tissue_label = match (self.tissue_label.take(), other.tissue_label) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }
}

/// A record of any entity type.
#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Gene(GeneRecord),
    Protein(ProteinRecord),
    Phenotype(PhenotypeRecord),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityRef {
    Gene(GeneId),
    Protein(String),
    Phenotype(String),
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntityRef::Gene(id) => write!(f, "gene:{id}"),
            EntityRef::Protein(acc) => write!(f, "protein:{acc}"),
            EntityRef::Phenotype(id) => write!(f, "phenotype:{id}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EdgeKind {
    GenePhenotype,
    GeneProtein,
    ProteinPhenotype,
}

impl EdgeKind {
    fn accepts(self, subject: &EntityRef, object: &EntityRef) -> bool {
        matches!(
            (self, subject, object),
            (EdgeKind::GenePhenotype, EntityRef::Gene(_), EntityRef::Phenotype(_))
                | (EdgeKind::GeneProtein, EntityRef::Gene(_), EntityRef::Protein(_))
                | (
                    EdgeKind::ProteinPhenotype,
                    EntityRef::Protein(_),
                    EntityRef::Phenotype(_)
                )
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Source {
    OmimLike,
    DisgenetLike,
    DbgapLike,
    UniprotLike,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssociationEdge {
    pub subject: EntityRef,
    pub object: EntityRef,
    pub kind: EdgeKind,
    pub sources: BTreeSet<Source>,
    #[serde(default)]
    pub verified: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<String>,
}

impl AssociationEdge {
    pub fn new(subject: EntityRef, object: EntityRef, kind: EdgeKind, source: Source) -> Self {
        AssociationEdge {
            subject,
            object,
            kind,
            sources: BTreeSet::from([source]),
            verified: false,
            evidence: None,
        }
    }

    pub fn gene_phenotype(gene: GeneId, phenotype: impl Into<String>, source: Source) -> Self {
        Self::new(
            EntityRef::Gene(gene),
            EntityRef::Phenotype(phenotype.into()),
            EdgeKind::GenePhenotype,
            source,
        )
    }

    pub fn key(&self) -> EdgeKey {
        EdgeKey {
            kind: self.kind,
            subject: self.subject.clone(),
            object: self.object.clone(),
        }
    }

    fn merge(&mut self, other: AssociationEdge) {
        self.sources.extend(other.sources);
        self.verified |= other.verified;
        self.evidence = match (self.evidence.take(), other.evidence) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }
}

/// Identity of an edge: at most one edge per (kind, subject, object).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeKey {
    pub kind: EdgeKind,
    pub subject: EntityRef,
    pub object: EntityRef,
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}({} -> {})", self.kind, self.subject, self.object)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct StoreData {
    genes: BTreeMap<GeneId, GeneRecord>,
    proteins: BTreeMap<String, ProteinRecord>,
    phenotypes: BTreeMap<String, PhenotypeRecord>,
    edges: BTreeMap<EdgeKey, AssociationEdge>,
}

impl StoreData {
    fn contains(&self, r: &EntityRef) -> bool {
        match r {
            EntityRef::Gene(id) => self.genes.contains_key(id),
            EntityRef::Protein(acc) => self.proteins.contains_key(acc),
            EntityRef::Phenotype(id) => self.phenotypes.contains_key(id),
        }
    }
}

/// Mutable build phase of a store.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StoreBuilder {
    data: StoreData,
}

impl StoreBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn upsert(&mut self, record: Record) -> Result<EntityRef, StoreError> {
        match record {
            Record::Gene(g) => self.upsert_gene(g),
            Record::Protein(p) => self.upsert_protein(p),
            Record::Phenotype(p) => self.upsert_phenotype(p),
        }
    }

    pub fn upsert_gene(&mut self, mut record: GeneRecord) -> Result<EntityRef, StoreError> {
        record.validate()?;
        canonical_set(&mut record.synonyms);
        canonical_set(&mut record.functions);
        let id = record.gene_id;
        match self.data.genes.get_mut(&id) {
            Some(existing) => existing.merge(record),
            None => {
                self.data.genes.insert(id, record);
            }
        }
        Ok(EntityRef::Gene(id))
    }

    pub fn upsert_protein(&mut self, mut record: ProteinRecord) -> Result<EntityRef, StoreError> {
        record.validate()?;
        if !self.data.genes.contains_key(&record.coding_gene_id) {
            return Err(StoreError::invalid(
                "protein",
                "coding_gene_id",
                format!("{} does not resolve to a stored gene", record.coding_gene_id),
            ));
        }
        canonical_set(&mut record.molecular_functions);
        let acc = record.accession.clone();
        match self.data.proteins.get_mut(&acc) {
            Some(existing) => existing.merge(record),
            None => {
                self.data.proteins.insert(acc.clone(), record);
            }
        }
        Ok(EntityRef::Protein(acc))
    }

    pub fn upsert_phenotype(&mut self, mut record: PhenotypeRecord) -> Result<EntityRef, StoreError> {
        record.validate()?;
        canonical_set(&mut record.synonyms);
        record.synonyms.retain(|s| *s != record.name);
        canonical_set(&mut record.inheritance_facts);
        let id = record.phenotype_id.clone();
        match self.data.phenotypes.get_mut(&id) {
            Some(existing) => existing.merge(record),
            None => {
                self.data.phenotypes.insert(id.clone(), record);
            }
        }
        Ok(EntityRef::Phenotype(id))
    }

    /// Links an edge between two stored entities. Linking an existing
    /// (kind, subject, object) merges provenance sources.
    pub fn link_edge(&mut self, edge: AssociationEdge) -> Result<EdgeKey, StoreError> {
        if !edge.kind.accepts(&edge.subject, &edge.object) {
            return Err(StoreError::EndpointKind {
                kind: edge.kind,
                subject: edge.subject,
                object: edge.object,
            });
        }
        for end in [&edge.subject, &edge.object] {
            if !self.data.contains(end) {
                return Err(StoreError::Dangling(end.clone()));
            }
        }
        let key = edge.key();
        match self.data.edges.get_mut(&key) {
            Some(existing) => existing.merge(edge),
            None => {
                self.data.edges.insert(key.clone(), edge);
            }
        }
        Ok(key)
    }

    pub fn contains(&self, r: &EntityRef) -> bool {
        self.data.contains(r)
    }

    pub fn edge(&self, key: &EdgeKey) -> Option<&AssociationEdge> {
        self.data.edges.get(key)
    }

    pub fn edges(&self) -> impl Iterator<Item = &AssociationEdge> {
        self.data.edges.values()
    }

    pub fn genes(&self) -> impl Iterator<Item = &GeneRecord> {
        self.data.genes.values()
    }

    pub fn phenotypes(&self) -> impl Iterator<Item = &PhenotypeRecord> {
        self.data.phenotypes.values()
    }

    pub fn set_verified(&mut self, key: &EdgeKey, verified: bool) -> bool {
        match self.data.edges.get_mut(key) {
            Some(e) => {
                e.verified = verified;
                true
            }
            None => false,
        }
    }

    pub fn gene_count(&self) -> usize {
        self.data.genes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.data.edges.len()
    }

    pub fn freeze(self) -> KnowledgeStore {
        KnowledgeStore::from_data(self.data)
    }
}

/// Immutable, indexed store. Safe for concurrent readers.
#[derive(Debug, Clone)]
pub struct KnowledgeStore {
    data: StoreData,
    symbol_index: HashMap<String, Vec<GeneId>>,
    synonym_index: HashMap<String, Vec<GeneId>>,
    phenotype_index: HashMap<String, Vec<String>>,
    adjacency: BTreeMap<EntityRef, Vec<EdgeKey>>,
    proteins_by_gene: BTreeMap<GeneId, Vec<String>>,
}

impl PartialEq for KnowledgeStore {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data
    }
}

fn fold(name: &str) -> String {
    name.trim().to_lowercase()
}

impl KnowledgeStore {
    pub fn builder() -> StoreBuilder {
        StoreBuilder::new()
    }

    fn from_data(data: StoreData) -> Self {
        let mut symbol_index: HashMap<String, Vec<GeneId>> = HashMap::new();
        let mut synonym_index: HashMap<String, Vec<GeneId>> = HashMap::new();
        // genes iterate in ascending id order, so index lists stay sorted
        for g in data.genes.values() {
            symbol_index.entry(fold(&g.symbol)).or_default().push(g.gene_id);
            for s in &g.synonyms {
                synonym_index.entry(fold(s)).or_default().push(g.gene_id);
            }
        }
        let mut phenotype_index: HashMap<String, Vec<String>> = HashMap::new();
        for p in data.phenotypes.values() {
            phenotype_index
                .entry(fold(&p.phenotype_id))
                .or_default()
                .push(p.phenotype_id.clone());
            for n in p.names() {
                let ids = phenotype_index.entry(fold(n)).or_default();
                if ids.last() != Some(&p.phenotype_id) {
                    ids.push(p.phenotype_id.clone());
                }
            }
        }
        let mut adjacency: BTreeMap<EntityRef, Vec<EdgeKey>> = BTreeMap::new();
        let mut proteins_by_gene: BTreeMap<GeneId, Vec<String>> = BTreeMap::new();
        for key in data.edges.keys() {
            adjacency.entry(key.subject.clone()).or_default().push(key.clone());
            adjacency.entry(key.object.clone()).or_default().push(key.clone());
            if let (EdgeKind::GeneProtein, EntityRef::Gene(g), EntityRef::Protein(p)) =
                (key.kind, &key.subject, &key.object)
            {
                proteins_by_gene.entry(*g).or_default().push(p.clone());
            }
        }
        KnowledgeStore {
            data,
            symbol_index,
            synonym_index,
            phenotype_index,
            adjacency,
            proteins_by_gene,
        }
    }

    /// Returns a builder holding a copy of this store's records.
    pub fn thaw(&self) -> StoreBuilder {
        StoreBuilder {
            data: self.data.clone(),
        }
    }

    pub fn gene(&self, id: GeneId) -> Option<&GeneRecord> {
        self.data.genes.get(&id)
    }

    pub fn protein(&self, accession: &str) -> Option<&ProteinRecord> {
        self.data.proteins.get(accession)
    }

    pub fn phenotype(&self, id: &str) -> Option<&PhenotypeRecord> {
        self.data.phenotypes.get(id)
    }

    pub fn contains(&self, r: &EntityRef) -> bool {
        self.data.contains(r)
    }

    pub fn genes(&self) -> impl ExactSizeIterator<Item = &GeneRecord> {
        self.data.genes.values()
    }

    pub fn proteins(&self) -> impl ExactSizeIterator<Item = &ProteinRecord> {
        self.data.proteins.values()
    }

    pub fn phenotypes(&self) -> impl ExactSizeIterator<Item = &PhenotypeRecord> {
        self.data.phenotypes.values()
    }

    /// All edges in canonical key order.
    pub fn edges(&self) -> impl ExactSizeIterator<Item = &AssociationEdge> {
        self.data.edges.values()
    }

    pub fn edge(&self, key: &EdgeKey) -> Option<&AssociationEdge> {
        self.data.edges.get(key)
    }

    pub fn edges_of_kind(&self, kind: EdgeKind) -> impl Iterator<Item = &AssociationEdge> {
        self.data.edges.values().filter(move |e| e.kind == kind)
    }

    /// Edges touching `entity`, from either side.
    pub fn edges_of(&self, entity: &EntityRef) -> Vec<&AssociationEdge> {
        self.adjacency
            .get(entity)
            .map(|keys| keys.iter().filter_map(|k| self.data.edges.get(k)).collect())
            .unwrap_or_default()
    }

    /// Accessions of proteins linked to a gene by GENE_PROTEIN edges, sorted.
    pub fn proteins_of_gene(&self, gene: GeneId) -> &[String] {
        self.proteins_by_gene.get(&gene).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Case-insensitive symbol lookup, then synonyms. Collisions resolve to
    /// the lowest gene id.
    pub fn resolve_symbol(&self, name: &str) -> Option<EntityRef> {
        let key = fold(name);
        self.symbol_index
            .get(&key)
            .or_else(|| self.synonym_index.get(&key))
            .and_then(|ids| ids.first())
            .map(|&id| EntityRef::Gene(id))
    }

    pub fn resolve_gene(&self, name: &str) -> Option<&GeneRecord> {
        match self.resolve_symbol(name)? {
            EntityRef::Gene(id) => self.gene(id),
            _ => None,
        }
    }

    /// Case-insensitive lookup by phenotype id, name or synonym; lowest id wins.
    pub fn resolve_phenotype(&self, name: &str) -> Option<&PhenotypeRecord> {
        self.phenotype_index
            .get(&fold(name))
            .and_then(|ids| ids.iter().min())
            .and_then(|id| self.phenotype(id))
    }

    /// Exactly the (gene, phenotype) pairs of GENE_PHENOTYPE edges.
    pub fn positive_pairs(&self) -> BTreeSet<(GeneId, String)> {
        self.edges_of_kind(EdgeKind::GenePhenotype)
            .filter_map(|e| match (&e.subject, &e.object) {
                (EntityRef::Gene(g), EntityRef::Phenotype(p)) => Some((*g, p.clone())),
                _ => None,
            })
            .collect()
    }

    pub fn gene_count(&self) -> usize {
        self.data.genes.len()
    }

    pub fn protein_count(&self) -> usize {
        self.data.proteins.len()
    }

    pub fn phenotype_count(&self) -> usize {
        self.data.phenotypes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.data.edges.len()
    }

    /// Writes the canonical line-delimited form: one tagged record per line,
    /// keys sorted, lines sorted by (tag, id).
    pub fn export(&self, path: &Path) -> Result<(), StoreError> {
        let io = |e: std::io::Error| StoreError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let file = File::create(path).map_err(io)?;
        let mut w = BufWriter::new(file);
        self.write_canonical(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn write_canonical<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        // tags in lexicographic order: edge < gene < phenotype < protein
        for e in self.data.edges.values() {
            write_tagged(w, "edge", e)?;
        }
        for g in self.data.genes.values() {
            write_tagged(w, "gene", g)?;
        }
        for p in self.data.phenotypes.values() {
            write_tagged(w, "phenotype", p)?;
        }
        for p in self.data.proteins.values() {
            write_tagged(w, "protein", p)?;
        }
        Ok(())
    }

    pub fn import(path: &Path) -> Result<KnowledgeStore, StoreError> {
        let file = File::open(path).map_err(|e| StoreError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::read_canonical(BufReader::new(file), &path.display().to_string())
    }

    pub fn read_canonical<R: BufRead>(reader: R, path: &str) -> Result<KnowledgeStore, StoreError> {
        let perr = |line: usize, message: String| StoreError::Parse {
            path: path.to_string(),
            line,
            message,
        };
        let mut genes = Vec::new();
        let mut proteins = Vec::new();
        let mut phenotypes = Vec::new();
        let mut edges = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let n = idx + 1;
            let line = line.map_err(|e| StoreError::Io {
                path: path.to_string(),
                source: e,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let mut value: Value = serde_json::from_str(&line).map_err(|e| perr(n, e.to_string()))?;
            let tag = value
                .as_object_mut()
                .and_then(|o| o.remove("t"))
                .ok_or_else(|| perr(n, "missing record tag \"t\"".into()))?;
            let conv = |e: serde_json::Error| perr(n, e.to_string());
            match tag.as_str() {
                Some("gene") => genes.push((n, serde_json::from_value(value).map_err(conv)?)),
                Some("protein") => proteins.push((n, serde_json::from_value(value).map_err(conv)?)),
                Some("phenotype") => phenotypes.push((n, serde_json::from_value(value).map_err(conv)?)),
                Some("edge") => edges.push((n, serde_json::from_value(value).map_err(conv)?)),
                _ => return Err(perr(n, format!("unknown record tag {tag}"))),
            }
        }
        let mut b = StoreBuilder::new();
        let at = |n: usize, e: StoreError| perr(n, e.to_string());
        for (n, g) in genes {
            b.upsert_gene(g).map_err(|e| at(n, e))?;
        }
        for (n, p) in phenotypes {
            b.upsert_phenotype(p).map_err(|e| at(n, e))?;
        }
        for (n, p) in proteins {
            b.upsert_protein(p).map_err(|e| at(n, e))?;
        }
        for (n, e) in edges {
            b.link_edge(e).map_err(|err| at(n, err))?;
        }
        Ok(b.freeze())
    }
}

fn write_tagged<W: Write, T: Serialize>(w: &mut W, tag: &str, record: &T) -> std::io::Result<()> {
    let mut value = serde_json::to_value(record)?;
    if let Value::Object(map) = &mut value {
        map.insert("t".to_string(), Value::String(tag.to_string()));
    }
    // serde_json's default map is ordered, so keys come out sorted
    serde_json::to_writer(&mut *w, &value)?;
    w.write_all(b"\n")
}
