//! Parsers for delimited flat-file exports.
//!
//! Column layouts are described by a [`SourceTableSpec`], so the same parsers
//! read NCBI-, OMIM-, UniProt-, DisGeNET- and dbGaP-style dumps. Bad rows are
//! never dropped silently: each ends up in a reject list with its data row
//! number, and for every parser `accepted + rejected == total`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::par::Execution;
use crate::store::{
    canonical_set, AssociationEdge, EdgeKey, EdgeKind, EntityRef, GeneId, GeneRecord, PhenotypeRecord, ProteinRecord,
    Source, StoreBuilder, StoreError,
};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("spec error for {kind:?}: {message}")]
    Spec { kind: SourceKind, message: String },
    #[error("{path}: {message}")]
    Table { path: String, message: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SourceKind {
    GeneInfo,
    GenePhenotype,
    GeneProtein,
    Evidence,
    DbgapAssoc,
}

impl SourceKind {
    pub fn label(self) -> &'static str {
        match self {
            SourceKind::GeneInfo => "GENE_INFO",
            SourceKind::GenePhenotype => "GENE_PHENOTYPE",
            SourceKind::GeneProtein => "GENE_PROTEIN",
            SourceKind::Evidence => "EVIDENCE",
            SourceKind::DbgapAssoc => "DBGAP_ASSOC",
        }
    }

    /// (mandatory, optional) target fields.
    fn fields(self) -> (&'static [&'static str], &'static [&'static str]) {
        match self {
            SourceKind::GeneInfo => (&["gene_id", "symbol"], &["synonyms", "summary", "functions"]),
            SourceKind::GenePhenotype => (
                &["gene_id", "phenotype_id"],
                &["phenotype_name", "description", "inheritance", "tissue", "evidence"],
            ),
            SourceKind::GeneProtein => (&["accession", "gene_id"], &["protein_name", "molecular_functions"]),
            SourceKind::Evidence => (&["gene_symbol", "disease_name", "sentence", "label"], &[]),
            SourceKind::DbgapAssoc => (&["gene", "phenotype"], &["phenotype_id"]),
        }
    }
}

/// A column selected by header name or by 0-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhenotypeMatch {
    /// Case-insensitive equality of ids, names or synonyms.
    #[default]
    Exact,
    /// Equality of the sets of lowercase alphanumeric tokens.
    TokenSet,
}

/// Describes how one delimited file maps onto record fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceTableSpec {
    pub source: SourceKind,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default = "default_true")]
    pub header: bool,
    /// RFC-4180 double-quote handling.
    #[serde(default)]
    pub quoting: bool,
    pub columns: BTreeMap<String, ColumnRef>,
    /// Provenance tag for edges produced from this table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Source>,
    #[serde(default)]
    pub phenotype_match: PhenotypeMatch,
}

fn default_delimiter() -> char {
    '\t'
}

fn default_true() -> bool {
    true
}

fn cols(pairs: &[(&str, &str)]) -> BTreeMap<String, ColumnRef> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), ColumnRef::Name(v.to_string())))
        .collect()
}

impl SourceTableSpec {
    /// Defaults mirroring the public flat-file conventions of each family.
    pub fn default_for(source: SourceKind) -> Self {
        let base = |columns, provenance| SourceTableSpec {
            source,
            delimiter: '\t',
            header: true,
            quoting: false,
            columns,
            provenance,
            phenotype_match: PhenotypeMatch::Exact,
        };
        match source {
            // NCBI gene_info
            SourceKind::GeneInfo => base(
                cols(&[
                    ("gene_id", "GeneID"),
                    ("symbol", "Symbol"),
                    ("synonyms", "Synonyms"),
                    ("summary", "description"),
                ]),
                None,
            ),
            // OMIM genemap-style export keyed by Entrez gene id
            SourceKind::GenePhenotype => base(
                cols(&[
                    ("gene_id", "Entrez Gene ID"),
                    ("phenotype_id", "Phenotype MIM Number"),
                    ("phenotype_name", "Phenotype"),
                    ("inheritance", "Inheritance"),
                ]),
                Some(Source::OmimLike),
            ),
            // UniProt TSV download
            SourceKind::GeneProtein => base(
                cols(&[
                    ("accession", "Entry"),
                    ("protein_name", "Protein names"),
                    ("gene_id", "GeneID"),
                    ("molecular_functions", "Gene Ontology (molecular function)"),
                ]),
                Some(Source::UniprotLike),
            ),
            SourceKind::Evidence => SourceTableSpec {
                delimiter: ',',
                quoting: true,
                ..base(
                    cols(&[
                        ("gene_symbol", "gene"),
                        ("disease_name", "disease"),
                        ("sentence", "sentence"),
                        ("label", "label"),
                    ]),
                    None,
                )
            },
            SourceKind::DbgapAssoc => base(
                cols(&[("gene", "gene"), ("phenotype", "trait")]),
                Some(Source::DbgapLike),
            ),
        }
    }

    /// DisGeNET gene-disease association export.
    pub fn disgenet_gene_disease() -> Self {
        SourceTableSpec {
            columns: cols(&[
                ("gene_id", "geneId"),
                ("phenotype_id", "diseaseId"),
                ("phenotype_name", "diseaseName"),
            ]),
            provenance: Some(Source::DisgenetLike),
            ..Self::default_for(SourceKind::GenePhenotype)
        }
    }

    fn check(&self, expected: SourceKind) -> Result<(), IngestError> {
        let spec_err = |message: String| IngestError::Spec {
            kind: self.source,
            message,
        };
        if self.source != expected {
            return Err(spec_err(format!(
                "spec is for {} but was used to parse {}",
                self.source.label(),
                expected.label()
            )));
        }
        if !self.delimiter.is_ascii() {
            return Err(spec_err("delimiter must be a single ASCII character".into()));
        }
        let (mandatory, optional) = self.source.fields();
        for m in mandatory {
            if !self.columns.contains_key(*m) {
                return Err(spec_err(format!("column_map lacks mandatory field {m:?}")));
            }
        }
        for k in self.columns.keys() {
            if !mandatory.contains(&k.as_str()) && !optional.contains(&k.as_str()) {
                return Err(spec_err(format!("unknown field {k:?} in column_map")));
            }
        }
        if !self.header {
            if let Some((k, _)) = self.columns.iter().find(|(_, c)| matches!(c, ColumnRef::Name(_))) {
                return Err(spec_err(format!(
                    "field {k:?} selects a column by name but the table has no header"
                )));
            }
        }
        Ok(())
    }
}

/// One rejected input row.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Reject {
    pub source: String,
    pub row: usize,
    pub reason: String,
}

/// Writes a reject report with columns (source, row, reason).
pub fn write_rejects(path: &Path, rejects: &[Reject]) -> Result<(), IngestError> {
    let io = |e: std::io::Error| IngestError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut w = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_writer(File::create(path).map_err(io)?);
    let conv = |e: csv::Error| IngestError::Table {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    w.write_record(["source", "row", "reason"]).map_err(conv)?;
    for r in rejects {
        w.write_record([r.source.as_str(), &r.row.to_string(), r.reason.as_str()])
            .map_err(conv)?;
    }
    w.flush().map_err(io)
}

/// Output of one parser run.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub items: Vec<T>,
    pub rejects: Vec<Reject>,
    pub total_rows: usize,
    pub accepted_rows: usize,
}

impl<T> Parsed<T> {
    pub fn is_conserved(&self) -> bool {
        self.accepted_rows + self.rejects.len() == self.total_rows
    }
}

struct Row {
    number: usize,
    values: Vec<Option<String>>,
}

struct Table {
    label: String,
    fields: Vec<String>,
    rows: Vec<Row>,
    rejects: Vec<Reject>,
    total: usize,
}

impl Table {
    fn field(&self, row: &Row, name: &str) -> Option<String> {
        let idx = self.fields.iter().position(|f| f == name)?;
        row.values[idx].clone()
    }

    fn reject(&self, row: usize, reason: impl Into<String>) -> Reject {
        Reject {
            source: self.label.clone(),
            row,
            reason: reason.into(),
        }
    }
}

fn source_label(kind: SourceKind, path: &Path) -> String {
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    format!("{}:{}", kind.label(), name)
}

fn read_table(path: &Path, spec: &SourceTableSpec, kind: SourceKind) -> Result<Table, IngestError> {
    spec.check(kind)?;
    let file = File::open(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(spec.delimiter as u8)
        .has_headers(spec.header)
        .flexible(true)
        .quoting(spec.quoting)
        .from_reader(file);
    let table_err = |message: String| IngestError::Table {
        path: path.display().to_string(),
        message,
    };
    let headers: Vec<String> = if spec.header {
        reader
            .headers()
            .map_err(|e| table_err(e.to_string()))?
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let h = h.trim();
                if i == 0 {
                    h.trim_start_matches('#').trim().to_string()
                } else {
                    h.to_string()
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut fields = Vec::new();
    let mut positions = Vec::new();
    for (field, col) in &spec.columns {
        let pos = match col {
            ColumnRef::Index(i) => *i,
            ColumnRef::Name(n) => headers.iter().position(|h| h == n).ok_or_else(|| IngestError::Spec {
                kind: spec.source,
                message: format!(
                    "column {n:?} for field {field:?} not found in header of {}",
                    path.display()
                ),
            })?,
        };
        fields.push(field.clone());
        positions.push(pos);
    }
    let label = source_label(kind, path);
    let mut rows = Vec::new();
    let mut rejects = Vec::new();
    let mut total = 0;
    for result in reader.records() {
        total += 1;
        let number = total;
        match result {
            Ok(rec) => {
                if rec.iter().all(|f| f.trim().is_empty()) {
                    rejects.push(Reject {
                        source: label.clone(),
                        row: number,
                        reason: "blank row".into(),
                    });
                    continue;
                }
                let values = positions
                    .iter()
                    .map(|&p| rec.get(p).map(|s| s.trim().to_string()))
                    .collect();
                rows.push(Row { number, values });
            }
            Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => {
                return Err(table_err(e.to_string()));
            }
            Err(e) => rejects.push(Reject {
                source: label.clone(),
                row: number,
                reason: format!("unreadable row: {e}"),
            }),
        }
    }
    Ok(Table {
        label,
        fields,
        rows,
        rejects,
        total,
    })
}

/// Absent, empty and NCBI-style "-" values all mean "no value".
fn present(v: Option<String>) -> Option<String> {
    v.filter(|s| !s.is_empty() && s != "-")
}

fn split_list(v: Option<String>, sep: char) -> Vec<String> {
    present(v)
        .map(|s| {
            s.split(sep)
                .map(|x| x.trim().to_string())
                .filter(|x| !x.is_empty() && x != "-")
                .collect()
        })
        .unwrap_or_default()
}

fn parse_gene_id(raw: Option<String>) -> Result<GeneId, String> {
    let raw = raw.ok_or("missing gene_id")?;
    // UniProt writes "351;" and sometimes several ids
    let first = raw
        .split(';')
        .map(str::trim)
        .find(|s| !s.is_empty())
        .ok_or("empty gene_id")?;
    match first.parse::<GeneId>() {
        Ok(0) => Err("gene_id must be positive".into()),
        Ok(id) => Ok(id),
        Err(_) => Err(format!("gene_id {first:?} is not a positive integer")),
    }
}

fn mandatory(table: &Table, row: &Row, name: &str) -> Result<String, String> {
    present(table.field(row, name)).ok_or_else(|| format!("missing {name}"))
}

pub fn parse_gene_info(path: &Path, spec: &SourceTableSpec) -> Result<Parsed<GeneRecord>, IngestError> {
    let table = read_table(path, spec, SourceKind::GeneInfo)?;
    let mut items = Vec::new();
    let mut rejects = table.rejects.clone();
    for row in &table.rows {
        let parsed = (|| -> Result<GeneRecord, String> {
            let gene_id = parse_gene_id(table.field(row, "gene_id"))?;
            let symbol = mandatory(&table, row, "symbol")?;
            let mut synonyms = split_list(table.field(row, "synonyms"), '|');
            canonical_set(&mut synonyms);
            synonyms.retain(|s| *s != symbol);
            let mut functions = split_list(table.field(row, "functions"), '|');
            canonical_set(&mut functions);
            let g = GeneRecord {
                gene_id,
                symbol,
                synonyms,
                summary: present(table.field(row, "summary")).unwrap_or_default(),
                functions,
            };
            g.validate().map_err(|e| e.to_string())?;
            Ok(g)
        })();
        match parsed {
            Ok(g) => items.push(g),
            Err(reason) => rejects.push(table.reject(row.number, reason)),
        }
    }
    rejects.sort();
    Ok(Parsed {
        accepted_rows: items.len(),
        items,
        rejects,
        total_rows: table.total,
    })
}

/// An edge together with the data rows that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedEdge {
    pub edge: AssociationEdge,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenePhenotypeParse {
    pub edges: Vec<ParsedEdge>,
    pub phenotypes: Vec<PhenotypeRecord>,
    pub rejects: Vec<Reject>,
    pub total_rows: usize,
    pub accepted_rows: usize,
    pub label: String,
}

impl GenePhenotypeParse {
    pub fn is_conserved(&self) -> bool {
        self.accepted_rows + self.rejects.len() == self.total_rows
    }
}

pub fn parse_gene_phenotype(path: &Path, spec: &SourceTableSpec) -> Result<GenePhenotypeParse, IngestError> {
    let table = read_table(path, spec, SourceKind::GenePhenotype)?;
    let source = spec.provenance.unwrap_or(Source::OmimLike);
    let mut edges: BTreeMap<EdgeKey, ParsedEdge> = BTreeMap::new();
    let mut phenotypes: BTreeMap<String, StoreBuilder> = BTreeMap::new();
    let mut rejects = table.rejects.clone();
    let mut accepted = 0;
    for row in &table.rows {
        let parsed = (|| -> Result<(AssociationEdge, PhenotypeRecord), String> {
            let gene_id = parse_gene_id(table.field(row, "gene_id"))?;
            let phenotype_id = mandatory(&table, row, "phenotype_id")?;
            let mut p = PhenotypeRecord::new(
                phenotype_id.clone(),
                present(table.field(row, "phenotype_name")).unwrap_or_default(),
            );
            p.description = present(table.field(row, "description")).unwrap_or_default();
            p.inheritance_facts = split_list(table.field(row, "inheritance"), ';');
            p.tissue_label = present(table.field(row, "tissue"));
            let mut e = AssociationEdge::gene_phenotype(gene_id, phenotype_id, source);
            e.evidence = present(table.field(row, "evidence"));
            Ok((e, p))
        })();
        match parsed {
            Ok((edge, pheno)) => {
                accepted += 1;
                let b = phenotypes.entry(pheno.phenotype_id.clone()).or_default();
                b.upsert_phenotype(pheno)?;
                let key = edge.key();
                match edges.get_mut(&key) {
                    Some(existing) => {
                        existing.rows.push(row.number);
                        existing.edge.evidence = match (existing.edge.evidence.take(), edge.evidence) {
                            (Some(a), Some(b)) => Some(a.min(b)),
                            (a, b) => a.or(b),
                        };
                    }
                    None => {
                        edges.insert(
                            key,
                            ParsedEdge {
                                edge,
                                rows: vec![row.number],
                            },
                        );
                    }
                }
            }
            Err(reason) => rejects.push(table.reject(row.number, reason)),
        }
    }
    rejects.sort();
    let phenotypes = phenotypes
        .into_values()
        .flat_map(|b| b.phenotypes().cloned().collect::<Vec<_>>())
        .collect();
    Ok(GenePhenotypeParse {
        edges: edges.into_values().collect(),
        phenotypes,
        rejects,
        total_rows: table.total,
        accepted_rows: accepted,
        label: table.label,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProteinLink {
    pub row: usize,
    pub protein: ProteinRecord,
    pub edge: AssociationEdge,
}

pub fn parse_gene_protein(path: &Path, spec: &SourceTableSpec) -> Result<Parsed<ProteinLink>, IngestError> {
    let table = read_table(path, spec, SourceKind::GeneProtein)?;
    let source = spec.provenance.unwrap_or(Source::UniprotLike);
    let mut items = Vec::new();
    let mut rejects = table.rejects.clone();
    for row in &table.rows {
        let parsed = (|| -> Result<ProteinLink, String> {
            let accession = mandatory(&table, row, "accession")?;
            let gene_id = parse_gene_id(table.field(row, "gene_id"))?;
            let mut molecular_functions = split_list(table.field(row, "molecular_functions"), ';');
            canonical_set(&mut molecular_functions);
            let protein = ProteinRecord {
                accession: accession.clone(),
                name: present(table.field(row, "protein_name")).unwrap_or_default(),
                coding_gene_id: gene_id,
                molecular_functions,
            };
            protein.validate().map_err(|e| e.to_string())?;
            let edge = AssociationEdge::new(
                EntityRef::Gene(gene_id),
                EntityRef::Protein(accession),
                EdgeKind::GeneProtein,
                source,
            );
            Ok(ProteinLink {
                row: row.number,
                protein,
                edge,
            })
        })();
        match parsed {
            Ok(l) => items.push(l),
            Err(reason) => rejects.push(table.reject(row.number, reason)),
        }
    }
    rejects.sort();
    Ok(Parsed {
        accepted_rows: items.len(),
        items,
        rejects,
        total_rows: table.total,
    })
}

/// A labelled sentence asserting (or denying) a gene-disease association.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub gene_symbol: String,
    pub disease_name: String,
    pub sentence: String,
    pub label: bool,
}

fn parse_label(raw: &str) -> Option<bool> {
    match raw.trim().to_lowercase().as_str() {
        "1"
        | "true"
        | "yes"
        | "y"
        | "t"
        | "positive"
        | "associated"
        | "biomarker"
        | "genomic_alterations"
        | "therapeutic" => Some(true),
        "0" | "false" | "no" | "n" | "f" | "negative" | "na" | "none" | "unrelated" => Some(false),
        _ => None,
    }
}

pub fn parse_evidence(path: &Path, spec: &SourceTableSpec) -> Result<Parsed<EvidenceRecord>, IngestError> {
    let table = read_table(path, spec, SourceKind::Evidence)?;
    let mut items = Vec::new();
    let mut rejects = table.rejects.clone();
    for row in &table.rows {
        let parsed = (|| -> Result<EvidenceRecord, String> {
            let gene_symbol = mandatory(&table, row, "gene_symbol")?;
            let disease_name = mandatory(&table, row, "disease_name")?;
            let sentence = table
                .field(row, "sentence")
                .filter(|s| !s.is_empty())
                .ok_or("blank sentence")?;
            let raw = mandatory(&table, row, "label")?;
            let label = parse_label(&raw).ok_or_else(|| format!("unrecognized label {raw:?}"))?;
            Ok(EvidenceRecord {
                gene_symbol,
                disease_name,
                sentence,
                label,
            })
        })();
        match parsed {
            Ok(r) => items.push(r),
            Err(reason) => rejects.push(table.reject(row.number, reason)),
        }
    }
    rejects.sort();
    Ok(Parsed {
        accepted_rows: items.len(),
        items,
        rejects,
        total_rows: table.total,
    })
}

fn token_set_key(name: &str) -> String {
    let mut toks: Vec<String> = name
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect();
    toks.sort();
    toks.dedup();
    toks.join(" ")
}

/// Name-based lookups over a store that is still being built.
struct BuilderIndex {
    gene_symbols: HashMap<String, GeneId>,
    gene_synonyms: HashMap<String, GeneId>,
    phenotypes: HashMap<String, String>,
}

impl BuilderIndex {
    fn new(b: &StoreBuilder, mode: PhenotypeMatch) -> Self {
        let mut gene_symbols = HashMap::new();
        let mut gene_synonyms = HashMap::new();
        for g in b.genes() {
            gene_symbols.entry(g.symbol.to_lowercase()).or_insert(g.gene_id);
            for s in &g.synonyms {
                gene_synonyms.entry(s.to_lowercase()).or_insert(g.gene_id);
            }
        }
        let mut phenotypes = HashMap::new();
        for p in b.phenotypes() {
            phenotypes
                .entry(p.phenotype_id.to_lowercase())
                .or_insert_with(|| p.phenotype_id.clone());
            for n in p.names() {
                let key = match mode {
                    PhenotypeMatch::Exact => n.to_lowercase(),
                    PhenotypeMatch::TokenSet => token_set_key(n),
                };
                phenotypes.entry(key).or_insert_with(|| p.phenotype_id.clone());
            }
        }
        BuilderIndex {
            gene_symbols,
            gene_synonyms,
            phenotypes,
        }
    }

    fn gene(&self, token: &str) -> Option<GeneId> {
        let key = token.trim().to_lowercase();
        self.gene_symbols
            .get(&key)
            .or_else(|| self.gene_synonyms.get(&key))
            .copied()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CrosscheckReport {
    pub total_rows: usize,
    pub accepted_rows: usize,
    pub verified_edges: usize,
    pub unverified_edges: usize,
    pub added_edges: usize,
    pub added_phenotypes: usize,
    pub rejects: Vec<Reject>,
}

/// Marks GENE_PHENOTYPE edges verified iff their pair occurs in a dbGaP-like
/// association table. Pairs only present in the table become new edges.
/// Never removes an edge.
pub fn crosscheck(
    builder: &mut StoreBuilder,
    dbgap_path: &Path,
    spec: &SourceTableSpec,
) -> Result<CrosscheckReport, IngestError> {
    let table = read_table(dbgap_path, spec, SourceKind::DbgapAssoc)?;
    let source = spec.provenance.unwrap_or(Source::DbgapLike);
    // Genes and phenotype names are both indexed by their lowest id, and the
    // rows are processed in canonical order, so the outcome is order-free.
    let index = BuilderIndex::new(builder, spec.phenotype_match);
    let mut report = CrosscheckReport {
        total_rows: table.total,
        rejects: table.rejects.clone(),
        ..Default::default()
    };
    let mut pairs: BTreeSet<(GeneId, String)> = BTreeSet::new();
    let mut new_phenotypes: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for row in &table.rows {
        let gene_tok = match mandatory(&table, row, "gene") {
            Ok(g) => g,
            Err(reason) => {
                report.rejects.push(table.reject(row.number, reason));
                continue;
            }
        };
        let name = match mandatory(&table, row, "phenotype") {
            Ok(n) => n,
            Err(reason) => {
                report.rejects.push(table.reject(row.number, reason));
                continue;
            }
        };
        let gene = gene_tok
            .parse::<GeneId>()
            .ok()
            .filter(|id| builder.contains(&EntityRef::Gene(*id)))
            .or_else(|| index.gene(&gene_tok));
        let Some(gene) = gene else {
            report
                .rejects
                .push(table.reject(row.number, format!("unknown gene {gene_tok:?}")));
            continue;
        };
        let by_id =
            present(table.field(row, "phenotype_id")).and_then(|id| index.phenotypes.get(&id.to_lowercase()).cloned());
        let key = match spec.phenotype_match {
            PhenotypeMatch::Exact => name.to_lowercase(),
            PhenotypeMatch::TokenSet => token_set_key(&name),
        };
        let phenotype_id = match by_id.or_else(|| index.phenotypes.get(&key).cloned()) {
            Some(id) => id,
            None => {
                let id = present(table.field(row, "phenotype_id"))
                    .unwrap_or_else(|| format!("DBGAP:{}", token_set_key(&name).replace(' ', "_")));
                new_phenotypes.entry(id.clone()).or_default().insert(name.clone());
                id
            }
        };
        report.accepted_rows += 1;
        pairs.insert((gene, phenotype_id));
    }
    report.added_phenotypes = new_phenotypes.len();
    for (id, names) in new_phenotypes {
        let mut names = names.into_iter();
        let mut p = PhenotypeRecord::new(id, names.next().unwrap_or_default());
        p.synonyms = names.collect();
        builder.upsert_phenotype(p)?;
    }
    let existing: Vec<EdgeKey> = builder
        .edges()
        .filter(|e| e.kind == EdgeKind::GenePhenotype)
        .map(AssociationEdge::key)
        .collect();
    let mut seen = BTreeSet::new();
    for key in existing {
        if let (EntityRef::Gene(g), EntityRef::Phenotype(p)) = (&key.subject, &key.object) {
            let pair = (*g, p.clone());
            let hit = pairs.contains(&pair);
            builder.set_verified(&key, hit);
            if hit {
                report.verified_edges += 1;
                seen.insert(pair);
            } else {
                report.unverified_edges += 1;
            }
        }
    }
    for (g, p) in pairs.into_iter().filter(|pair| !seen.contains(pair)) {
        builder.link_edge(AssociationEdge::gene_phenotype(g, p, source))?;
        report.added_edges += 1;
    }
    report.rejects.sort();
    Ok(report)
}

/// One input file for [`ingest_sources`].
#[derive(Debug, Clone)]
pub struct SourceFile {
    pub path: PathBuf,
    pub spec: SourceTableSpec,
}

impl SourceFile {
    pub fn new(path: impl Into<PathBuf>, spec: SourceTableSpec) -> Self {
        SourceFile {
            path: path.into(),
            spec,
        }
    }

    pub fn with_default_spec(path: impl Into<PathBuf>, kind: SourceKind) -> Self {
        Self::new(path, SourceTableSpec::default_for(kind))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RowCounts {
    pub total: usize,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestReport {
    /// Per source label.
    pub counts: BTreeMap<String, RowCounts>,
    pub rejects: Vec<Reject>,
    pub crosscheck: Option<CrosscheckReport>,
}

impl IngestReport {
    pub fn is_conserved(&self) -> bool {
        self.counts.values().all(|c| c.accepted + c.rejected == c.total)
    }
}

enum ParsedFile {
    Genes(String, Parsed<GeneRecord>),
    GenePhenotype(GenePhenotypeParse),
    Proteins(String, Parsed<ProteinLink>),
}

/// Parses every gene, gene-phenotype and gene-protein file (in parallel),
/// links everything into one builder, then optionally runs the dbGaP
/// crosscheck. Edges whose endpoints never arrive are rejected with the rows
/// that produced them.
pub fn ingest_sources(
    sources: &[SourceFile],
    dbgap: &[SourceFile],
    exec: Execution,
) -> Result<(StoreBuilder, IngestReport), IngestError> {
    for s in sources {
        if matches!(s.spec.source, SourceKind::Evidence | SourceKind::DbgapAssoc) {
            return Err(IngestError::Spec {
                kind: s.spec.source,
                message: "evidence and dbGaP tables are not store sources".into(),
            });
        }
    }
    let parsed: Vec<Result<ParsedFile, IngestError>> = exec.map(sources, |s| {
        let label = source_label(s.spec.source, &s.path);
        Ok(match s.spec.source {
            SourceKind::GeneInfo => ParsedFile::Genes(label, parse_gene_info(&s.path, &s.spec)?),
            SourceKind::GenePhenotype => ParsedFile::GenePhenotype(parse_gene_phenotype(&s.path, &s.spec)?),
            SourceKind::GeneProtein => ParsedFile::Proteins(label, parse_gene_protein(&s.path, &s.spec)?),
            _ => unreachable!(),
        })
    });
    let parsed = parsed.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut report = IngestReport::default();
    let mut builder = StoreBuilder::new();
    let mut gp = Vec::new();
    let mut prot = Vec::new();
    for p in parsed {
        match p {
            ParsedFile::Genes(label, g) => {
                report.rejects.extend(g.rejects.iter().cloned());
                report.counts.insert(
                    label,
                    RowCounts {
                        total: g.total_rows,
                        accepted: g.accepted_rows,
                        rejected: g.rejects.len(),
                    },
                );
                for rec in g.items {
                    builder.upsert_gene(rec)?;
                }
            }
            ParsedFile::GenePhenotype(x) => gp.push(x),
            ParsedFile::Proteins(label, x) => prot.push((label, x)),
        }
    }
    for x in gp {
        let mut counts = RowCounts {
            total: x.total_rows,
            accepted: x.accepted_rows,
            rejected: x.rejects.len(),
        };
        report.rejects.extend(x.rejects.iter().cloned());
        for p in x.phenotypes {
            builder.upsert_phenotype(p)?;
        }
        for pe in x.edges {
            if let Err(err) = builder.link_edge(pe.edge) {
                for row in pe.rows {
                    counts.accepted -= 1;
                    counts.rejected += 1;
                    report.rejects.push(Reject {
                        source: x.label.clone(),
                        row,
                        reason: err.to_string(),
                    });
                }
            }
        }
        report.counts.insert(x.label, counts);
    }
    for (label, x) in prot {
        let mut counts = RowCounts {
            total: x.total_rows,
            accepted: x.accepted_rows,
            rejected: x.rejects.len(),
        };
        report.rejects.extend(x.rejects.iter().cloned());
        for link in x.items {
            let linked = builder
                .upsert_protein(link.protein)
                .and_then(|_| builder.link_edge(link.edge));
            if let Err(err) = linked {
                counts.accepted -= 1;
                counts.rejected += 1;
                report.rejects.push(Reject {
                    source: label.clone(),
                    row: link.row,
                    reason: err.to_string(),
                });
            }
        }
        report.counts.insert(label, counts);
    }
    for d in dbgap {
        let cc = crosscheck(&mut builder, &d.path, &d.spec)?;
        let label = source_label(SourceKind::DbgapAssoc, &d.path);
        report.rejects.extend(cc.rejects.iter().cloned());
        report.counts.insert(
            label,
            RowCounts {
                total: cc.total_rows,
                accepted: cc.accepted_rows,
                rejected: cc.rejects.len(),
            },
        );
        report.crosscheck = Some(cc);
    }
    report.rejects.sort();
    Ok((builder, report))
}
