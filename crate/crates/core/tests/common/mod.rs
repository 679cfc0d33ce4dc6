//! Fixtures and independent oracles shared by the integration tests and the
//! acceptance harness. Oracles deliberately avoid the library's own helpers.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use gpkit::store::{
    AssociationEdge, EdgeKind, EntityRef, GeneRecord, KnowledgeStore, PhenotypeRecord, ProteinRecord, Source,
};
use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ner", "tus", "vex", "dor", "pil", "san", "bru", "quo", "fen", "rix", "zal", "hem", "gor",
];

/// Distinct pronounceable token per index.
pub fn word(mut i: usize) -> String {
    let mut s = String::new();
    loop {
        s.push_str(SYLLABLES[i % 16]);
        i /= 16;
        if i == 0 {
            break;
        }
    }
    s
}

const TISSUES: [&str; 4] = ["brain", "liver", "heart", "kidney"];

/// Store with one protein per gene and `edges_per_gene` distinct phenotype
/// links per gene. Every field a corpus template needs is filled.
pub fn synthetic_store(genes: usize, phenotypes: usize, edges_per_gene: usize, seed: u64) -> KnowledgeStore {
    assert!(edges_per_gene <= phenotypes);
    let mut r = rng(seed);
    let mut b = KnowledgeStore::builder();
    for p in 0..phenotypes {
        let mut rec = PhenotypeRecord::new(format!("MIM:{}", 100_000 + p), format!("{} syndrome {p}", word(p + 7)));
        rec.description = format!("A condition with {} deposits in the {}.", word(p + 300), TISSUES[p % 4]);
        rec.inheritance_facts = vec![if p % 3 == 0 {
            "Autosomal recessive"
        } else {
            "Autosomal dominant"
        }
        .into()];
        rec.tissue_label = Some(TISSUES[p % 4].into());
        b.upsert_phenotype(rec).unwrap();
    }
    for g in 0..genes {
        let id = 1 + g as u64;
        let mut rec = GeneRecord::new(id, format!("GX{g}"));
        rec.summary = format!("Encodes a {} regulator.", word(g + 50));
        rec.functions = vec![format!("{} binding", word(g + 90))];
        b.upsert_gene(rec).unwrap();
        let acc = format!("Q{g:07}");
        b.upsert_protein(ProteinRecord {
            accession: acc.clone(),
            name: format!("{} kinase {g}", word(g + 11)),
            coding_gene_id: id,
            molecular_functions: vec!["ATP binding".into(), format!("{} transport", word(g % 40))],
        })
        .unwrap();
        b.link_edge(AssociationEdge::new(
            EntityRef::Gene(id),
            EntityRef::Protein(acc),
            EdgeKind::GeneProtein,
            Source::UniprotLike,
        ))
        .unwrap();
        for p in index::sample(&mut r, phenotypes, edges_per_gene) {
            b.link_edge(AssociationEdge::gene_phenotype(
                id,
                format!("MIM:{}", 100_000 + p),
                Source::OmimLike,
            ))
            .unwrap();
        }
    }
    b.freeze()
}

/// Reads the NLTK reference stems (`word\tstem`).
pub fn nltk_stems() -> HashMap<String, String> {
    let text = include_str!("../data/porter_reference.tsv");
    text.lines()
        .filter_map(|l| l.split_once('\t'))
        .map(|(w, s)| (w.to_string(), s.to_string()))
        .collect()
}

/// Lowercased maximal runs of alphanumeric characters, by hand.
pub fn oracle_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn occurrences(tokens: &[String], gram: &[String]) -> usize {
    if gram.len() > tokens.len() {
        return 0;
    }
    (0..=tokens.len() - gram.len())
        .filter(|&i| tokens[i..i + gram.len()] == *gram)
        .count()
}

/// Sentence BLEU by exhaustive n-gram counting.
pub fn oracle_bleu(candidate: &str, references: &[&str], max_n: usize, add_one: bool) -> f64 {
    let cand = oracle_tokens(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| oracle_tokens(r)).collect();
    let c = cand.len();
    if c == 0 {
        return 0.0;
    }
    let orders = max_n.min(c);
    let mut product = 1.0f64;
    for n in 1..=orders {
        let grams: Vec<&[String]> = (0..=c - n).map(|i| &cand[i..i + n]).collect();
        let mut clipped = 0;
        for (i, g) in grams.iter().enumerate() {
            if grams[..i].contains(g) {
                continue;
            }
            let in_cand = occurrences(&cand, g);
            let in_ref = refs.iter().map(|r| occurrences(r, g)).max().unwrap_or(0);
            clipped += in_cand.min(in_ref);
        }
        let total = grams.len();
        let p = if clipped > 0 {
            clipped as f64 / total as f64
        } else if add_one {
            1.0 / (total as f64 + 1.0)
        } else {
            return 0.0;
        };
        product *= p;
    }
    let mut best = refs[0].len();
    for r in &refs {
        let (d, bd) = (r.len().abs_diff(c), best.abs_diff(c));
        if d < bd || (d == bd && r.len() < best) {
            best = r.len();
        }
    }
    let bp = if c > best {
        1.0
    } else {
        (1.0 - best as f64 / c as f64).exp()
    };
    bp * product.powf(1.0 / orders as f64)
}

/// Unigram clipped precision against the keyword tokens, no brevity penalty.
pub fn oracle_keyword_bleu1(candidate: &str, keyword: &str) -> f64 {
    let cand = oracle_tokens(candidate);
    let kw = oracle_tokens(keyword);
    if cand.is_empty() {
        return 0.0;
    }
    let mut seen: Vec<&String> = Vec::new();
    let mut clipped = 0;
    for t in &cand {
        if seen.contains(&t) {
            continue;
        }
        seen.push(t);
        let a = cand.iter().filter(|x| *x == t).count();
        let b = kw.iter().filter(|x| *x == t).count();
        clipped += a.min(b);
    }
    clipped as f64 / cand.len() as f64
}

/// (precision, recall, accuracy, f1) straight from prediction/gold pairs.
pub fn oracle_confusion(pairs: &[(bool, bool)]) -> (f64, f64, f64, f64) {
    let count = |p: bool, g: bool| pairs.iter().filter(|&&x| x == (p, g)).count() as f64;
    let (tp, fp, fnn, tn) = (
        count(true, true),
        count(true, false),
        count(false, true),
        count(false, false),
    );
    let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let f1 = div(2.0 * tp, 2.0 * tp + fp + fnn);
    (
        div(tp, tp + fp),
        div(tp, tp + fnn),
        div(tp + tn, tp + fp + fnn + tn),
        f1,
    )
}

/// Stems from the reference table; words absent from it are a fixture bug.
pub fn oracle_stem_tokens(name: &str, stop_stems: &BTreeSet<String>, table: &HashMap<String, String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in oracle_tokens(name) {
        let s = table
            .get(&t)
            .cloned()
            .unwrap_or_else(|| panic!("fixture word {t:?} not in reference table"));
        if !stop_stems.contains(&s) && !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

pub fn oracle_entity_match(
    generation: &str,
    gold_names: &[&str],
    stop_stems: &BTreeSet<String>,
    table: &HashMap<String, String>,
) -> bool {
    let generated = oracle_stem_tokens(generation, &BTreeSet::new(), table);
    gold_names.iter().any(|name| {
        let stems = oracle_stem_tokens(name, stop_stems, table);
        !stems.is_empty() && stems.iter().all(|s| generated.contains(s))
    })
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues and the matching eigenvectors as columns.
#[allow(clippy::needless_range_loop)]
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i][i]).collect();
    let vectors = (0..n).map(|j| (0..n).map(|i| v[i][j]).collect()).collect();
    (values, vectors)
}

pub struct OraclePca {
    pub coords: Vec<Vec<f64>>,
    pub components: Vec<Vec<f64>>,
    pub ratios: Vec<f64>,
}

/// PCA through the covariance matrix and Jacobi rotations.
pub fn oracle_pca(x: &[Vec<f64>], k: usize) -> OraclePca {
    let n = x.len();
    let d = x[0].len();
    let means: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let c: Vec<Vec<f64>> = x
        .iter()
        .map(|r| r.iter().zip(&means).map(|(v, m)| v - m).collect())
        .collect();
    let cov: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| c.iter().map(|r| r[i] * r[j]).sum()).collect())
        .collect();
    let total: f64 = c.iter().flatten().map(|v| v * v).sum();
    let (values, vectors) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
    let mut components = Vec::new();
    let mut ratios = Vec::new();
    for &i in order.iter().take(k) {
        let mut axis = vectors[i].clone();
        let mut best = 0;
        for j in 1..d {
            if axis[j].abs() > axis[best].abs() {
                best = j;
            }
        }
        if axis[best] < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(axis);
        ratios.push(values[i].max(0.0) / total);
    }
    let coords = c
        .iter()
        .map(|r| {
            components
                .iter()
                .map(|a| r.iter().zip(a).map(|(u, v)| u * v).sum())
                .collect()
        })
        .collect();
    OraclePca {
        coords,
        components,
        ratios,
    }
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Textbook silhouette over all labelled points, Euclidean distance.
pub fn oracle_silhouette(points: &[Vec<f64>], labels: &[&str]) -> f64 {
    let n = points.len();
    let mut total = 0.0;
    for i in 0..n {
        let own: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if own.is_empty() {
            continue;
        }
        let a = own.iter().map(|&j| euclid(&points[i], &points[j])).sum::<f64>() / own.len() as f64;
        let mut b = f64::INFINITY;
        let others: BTreeSet<&str> = labels.iter().copied().filter(|l| *l != labels[i]).collect();
        for l in others {
            let members: Vec<usize> = (0..n).filter(|&j| labels[j] == l).collect();
            let m = members.iter().map(|&j| euclid(&points[i], &points[j])).sum::<f64>() / members.len() as f64;
            b = b.min(m);
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

pub fn gaussian(r: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = r.random_range(1e-12..1.0);
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Peak resident set size of this process in KiB (Linux only).
pub fn vm_hwm_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmHWM:"))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse().ok())
}

/// What the stub server does with the n-th request (0-based).
pub enum Reply {
    Status(u16),
    Text(String),
}

/// Minimal HTTP/1.1 server on 127.0.0.1 that answers with a script. Counts
/// requests and tracks the peak number handled at once.
pub struct StubServer {
    pub url: String,
    pub requests: Arc<AtomicUsize>,
    pub peak_in_flight: Arc<AtomicUsize>,
}

impl StubServer {
    /// `script(index, prompt)` decides each reply; `delay` is held while the
    /// request counts as in flight.
    pub fn start<F>(delay: Duration, script: F) -> Self
    where
        F: Fn(usize, &str) -> Reply + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/completions", listener.local_addr().unwrap());
        let requests = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let current = Arc::new(AtomicUsize::new(0));
        let script = Arc::new(script);
        let (rq, pk) = (requests.clone(), peak.clone());
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let (rq, pk, cur, script) = (rq.clone(), pk.clone(), current.clone(), script.clone());
                std::thread::spawn(move || serve(stream, delay, &rq, &pk, &cur, &*script));
            }
        });
        StubServer {
            url,
            requests,
            peak_in_flight: peak,
        }
    }
}

fn serve(
    stream: TcpStream,
    delay: Duration,
    requests: &AtomicUsize,
    peak: &AtomicUsize,
    current: &AtomicUsize,
    script: &(dyn Fn(usize, &str) -> Reply + Send + Sync),
) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut out = stream;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let mut length = 0usize;
        loop {
            let mut h = String::new();
            if reader.read_line(&mut h).unwrap_or(0) == 0 {
                return;
            }
            let h = h.trim_end();
            if h.is_empty() {
                break;
            }
            if let Some((k, v)) = h.split_once(':') {
                if k.eq_ignore_ascii_case("content-length") {
                    length = v.trim().parse().unwrap_or(0);
                }
            }
        }
        let mut body = vec![0; length];
        if reader.read_exact(&mut body).is_err() {
            return;
        }
        let prompt = serde_json::from_slice::<serde_json::Value>(&body)
            .ok()
            .and_then(|v| v["prompt"].as_str().map(str::to_string))
            .unwrap_or_default();
        let idx = requests.fetch_add(1, Ordering::SeqCst);
        let now = current.fetch_add(1, Ordering::SeqCst) + 1;
        peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(delay);
        current.fetch_sub(1, Ordering::SeqCst);
        let (status, payload) = match script(idx, &prompt) {
            Reply::Status(s) => (s, String::from("{\"error\":\"scripted\"}")),
            Reply::Text(t) => (200, serde_json::json!({"choices": [{"text": t}]}).to_string()),
        };
        let response = format!(
            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{payload}",
            payload.len()
        );
        if out.write_all(response.as_bytes()).is_err() {
            return;
        }
    }
}

pub struct DirtySources {
    pub gene_info: std::path::PathBuf,
    pub gene_phenotype: std::path::PathBuf,
    pub disgenet: std::path::PathBuf,
    pub gene_protein: std::path::PathBuf,
    pub evidence: std::path::PathBuf,
    pub dbgap: std::path::PathBuf,
}

fn write_table(path: &std::path::Path, header: &str, mut rows: Vec<String>, shuffle: Option<&mut ChaCha8Rng>) {
    if let Some(r) = shuffle {
        rows.shuffle(r);
    }
    let mut text = format!("{header}\n");
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

/// One table per source family with valid rows mixed with malformed ones:
/// bad ids, missing mandatory values, short rows, blank rows, references to
/// unknown genes and duplicate rows. With `shuffle_seed`, data rows are
/// written in a shuffled order.
pub fn write_dirty_sources(dir: &std::path::Path, genes: usize, shuffle_seed: Option<u64>) -> DirtySources {
    let mut shuffler = shuffle_seed.map(rng);
    let mut r = rng(99);
    let mut gi = Vec::new();
    let mut gp = Vec::new();
    let mut dg = Vec::new();
    let mut pr = Vec::new();
    let mut ev = Vec::new();
    let mut db = Vec::new();
    for g in 0..genes {
        let id = 1000 + g;
        let sym = format!("DX{g}");
        gi.push(format!("{id}\t{sym}\tALT{g}|-\t{} factor", word(g)));
        let p = r.random_range(0..genes / 2 + 1);
        gp.push(format!(
            "{id}\t{}\t{} disease {p}\tAutosomal dominant",
            300_000 + p,
            word(p + 40)
        ));
        dg.push(format!("{id}\tC{:07}\t{} disorder {p}", p, word(p + 80)));
        pr.push(format!(
            "P{id}\t{} protein\t{id};\tATP binding; {} activity",
            word(g + 5),
            word(g + 6)
        ));
        let label = if g % 3 == 0 { "1" } else { "0" };
        ev.push(format!(
            "{sym},{} disease {p},\"{sym}, seen in {} disease {p}.\",{label}",
            word(p + 40),
            word(p + 40)
        ));
        if g % 2 == 0 {
            db.push(format!("{sym}\t{} disease {p}", word(p + 40)));
        }
    }
    gi.extend([
        "abc\tBAD\t-\tx".into(),
        "0\tZERO\t-\tx".into(),
        "1999\t\t-\tno symbol".into(),
        "\t\t\t".into(),
        "77".into(),
    ]);
    gi.push(gi[0].clone());
    gp.extend([
        "99999\t300001\tGhost disease\tAD".into(),
        "1000\t\tNo id".into(),
        "x\t300002\tBad".into(),
    ]);
    dg.extend(["1000\t\tmissing id".into(), "-\tC0000001\tno gene".into()]);
    pr.extend([
        "\tnameless\t1000;\t-".into(),
        "P9\tghost\t424242;\t-".into(),
        "P8\tbad\tnot-a-number\t-".into(),
    ]);
    ev.extend([
        "DX0,,\"no disease\",1".into(),
        "DX1,x disease,\"bad label\",maybe".into(),
        ",,,".into(),
    ]);
    db.extend(["NOPE\tunknown gene trait".into(), "\tmissing gene".into()]);
    std::fs::create_dir_all(dir).unwrap();
    let out = DirtySources {
        gene_info: dir.join("gene_info.tsv"),
        gene_phenotype: dir.join("genemap.tsv"),
        disgenet: dir.join("disgenet.tsv"),
        gene_protein: dir.join("uniprot.tsv"),
        evidence: dir.join("evidence.csv"),
        dbgap: dir.join("dbgap.tsv"),
    };
    write_table(
        &out.gene_info,
        "#GeneID\tSymbol\tSynonyms\tdescription",
        gi,
        shuffler.as_mut(),
    );
    write_table(
        &out.gene_phenotype,
        "Entrez Gene ID\tPhenotype MIM Number\tPhenotype\tInheritance",
        gp,
        shuffler.as_mut(),
    );
    write_table(&out.disgenet, "geneId\tdiseaseId\tdiseaseName", dg, shuffler.as_mut());
    write_table(
        &out.gene_protein,
        "Entry\tProtein names\tGeneID\tGene Ontology (molecular function)",
        pr,
        shuffler.as_mut(),
    );
    write_table(&out.evidence, "gene,disease,sentence,label", ev, shuffler.as_mut());
    write_table(&out.dbgap, "gene\ttrait", db, shuffler.as_mut());
    out
}

/// Random text over a small vocabulary so n-grams actually collide.
fn random_text(r: &mut ChaCha8Rng, vocab: &[&str], max_len: usize) -> String {
    let len = r.random_range(0..=max_len);
    let mut s = String::new();
    for i in 0..len {
        if i > 0 {
            s.push_str([" ", ", ", "-", " ; "][r.random_range(0..4)]);
        }
        let w = vocab[r.random_range(0..vocab.len())];
        if r.random_bool(0.2) {
            let mut c = w.chars();
            let first = c.next().unwrap().to_uppercase().to_string();
            s.push_str(&(first + c.as_str()));
        } else {
            s.push_str(w);
        }
    }
    if r.random_bool(0.3) {
        s.push('.');
    }
    s
}

fn nonempty_text(r: &mut ChaCha8Rng, vocab: &[&str], max_len: usize) -> String {
    loop {
        let t = random_text(r, vocab, max_len);
        if !oracle_tokens(&t).is_empty() {
            return t;
        }
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Compares the five metric functions with the oracles above on `fixtures`
/// random cases each. Returns the number of comparisons and the failures.
pub fn metric_oracle_failures(fixtures: usize, seed: u64, tol: f64) -> (usize, Vec<String>) {
    use gpkit::metrics::{
        bleu, confusion_metrics, entity_match, keyword_bleu1, stem_tokens, ConfusionCounts, GoldEntity, Smoothing,
        Stoplist, TokenizedText,
    };
    let table = nltk_stems();
    let mut words: Vec<&str> = table.keys().map(String::as_str).filter(|w| w.len() > 2).collect();
    words.sort_unstable();
    let stop_words = [
        "disease", "syndrome", "disorder", "type", "familial", "of", "the", "and",
    ];
    let mut r = rng(seed);
    let mut fails = Vec::new();
    let mut checks = 0;

    for case in 0..fixtures {
        let vocab: Vec<&str> = words.choose_multiple(&mut r, 6).copied().collect();

        // bleu
        let cand = random_text(&mut r, &vocab, 9);
        let refs: Vec<String> = (0..r.random_range(1..=3))
            .map(|_| nonempty_text(&mut r, &vocab, 9))
            .collect();
        let max_n = r.random_range(1..=4);
        for (sm, add_one) in [(Smoothing::AddOne, true), (Smoothing::None, false)] {
            let ref_refs: Vec<&str> = refs.iter().map(String::as_str).collect();
            let want = oracle_bleu(&cand, &ref_refs, max_n, add_one);
            let toks: Vec<TokenizedText> = refs.iter().map(|s| TokenizedText::new(s)).collect();
            let got = bleu(&TokenizedText::new(&cand), &toks, max_n, sm).unwrap().score;
            checks += 1;
            if !close(got, want, tol) {
                fails.push(format!(
                    "bleu case {case}: {cand:?} vs {refs:?} n={max_n}: {got} != {want}"
                ));
            }
        }

        // keyword_bleu1
        let kw = nonempty_text(&mut r, &vocab, 3);
        let got = keyword_bleu1(&TokenizedText::new(&cand), &TokenizedText::new(&kw)).unwrap();
        let want = oracle_keyword_bleu1(&cand, &kw);
        checks += 1;
        if !close(got, want, tol) {
            fails.push(format!("keyword_bleu1 case {case}: {got} != {want}"));
        }

        // confusion_metrics
        let pairs: Vec<(bool, bool)> = (0..r.random_range(1..=30))
            .map(|_| (r.random_bool(0.5), r.random_bool(0.4)))
            .collect();
        let m = confusion_metrics(&ConfusionCounts::from_pairs(pairs.iter().copied())).unwrap();
        let (p, rc, acc, f1) = oracle_confusion(&pairs);
        checks += 1;
        if !(close(m.precision, p, tol)
            && close(m.recall, rc, tol)
            && close(m.accuracy, acc, tol)
            && close(m.f1, f1, tol))
        {
            fails.push(format!("confusion case {case}: {m:?} != {:?}", (p, rc, acc, f1)));
        }

        // stem_tokens
        let mut name_vocab = vocab.clone();
        name_vocab.extend(stop_words);
        let name = random_text(&mut r, &name_vocab, 6);
        let stops: Vec<&str> = name_vocab.choose_multiple(&mut r, 4).copied().collect();
        let stop_stems: BTreeSet<String> = stops.iter().map(|w| table[*w].clone()).collect();
        let stoplist = Stoplist::new(&stops);
        checks += 1;
        let got = stem_tokens(&name, &stoplist);
        let want = oracle_stem_tokens(&name, &stop_stems, &table);
        if got != want {
            fails.push(format!("stem_tokens case {case}: {name:?} {got:?} != {want:?}"));
        }

        // entity_match
        let generation = random_text(&mut r, &name_vocab, 10);
        let names: Vec<String> = (0..r.random_range(1..=3))
            .map(|_| nonempty_text(&mut r, &name_vocab, 3))
            .collect();
        let gold = vec![GoldEntity::with_synonyms(names[0].clone(), names[1..].to_vec())];
        let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
        checks += 1;
        let got = entity_match(&generation, &gold, &stoplist).unwrap().matched;
        let want = oracle_entity_match(&generation, &name_refs, &stop_stems, &table);
        if got != want {
            fails.push(format!(
                "entity_match case {case}: {generation:?} vs {names:?}: {got} != {want}"
            ));
        }
    }
    (checks, fails)
}

pub fn read_examples(path: &std::path::Path) -> Vec<gpkit::corpus::CorpusExample> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Builds the corpus twice (sequential and parallel) and checks mask
/// discipline, negative soundness, split disjointness, stratification
/// within one example and byte-identical output. Returns the examples
/// written and every violation found.
pub fn corpus_invariant_failures(
    store: &KnowledgeStore,
    config: &gpkit::corpus::CorpusConfig,
    dir: &std::path::Path,
) -> (usize, Vec<String>) {
    use gpkit::corpus::{build_corpus, CorpusTemplates, Polarity, Stage, TaskKind};
    use gpkit::par::Execution;
    use std::collections::BTreeMap;

    let templates = CorpusTemplates::defaults();
    let a = dir.join("a");
    let b = dir.join("b");
    let manifest = build_corpus(store, &templates, config, &a, Execution::Sequential, BTreeMap::new()).unwrap();
    build_corpus(store, &templates, config, &b, Execution::Parallel, BTreeMap::new()).unwrap();
    let mut fails = Vec::new();

    let mut names: Vec<String> = manifest.files.iter().map(|f| f.name.clone()).collect();
    names.push("manifest.json".into());
    names.push("skipped.tsv".into());
    for name in &names {
        if std::fs::read(a.join(name)).unwrap() != std::fs::read(b.join(name)).unwrap() {
            fails.push(format!("{name} differs between regenerations"));
        }
    }

    let positives = store.positive_pairs();
    let mut seen: HashMap<String, String> = HashMap::new();
    let mut total = 0;
    for stage in Stage::ALL {
        let mut counts: BTreeMap<TaskKind, (usize, usize)> = BTreeMap::new();
        for (split, is_val) in [("train", false), ("validation", true)] {
            let name = format!("{}.{split}.jsonl", stage.file_prefix());
            for ex in read_examples(&a.join(&name)) {
                total += 1;
                let c = counts.entry(ex.task_kind).or_default();
                if is_val {
                    c.1 += 1;
                } else {
                    c.0 += 1;
                }
                if let Some(prev) = seen.insert(ex.example_id.to_string(), name.clone()) {
                    fails.push(format!("{} in both {prev} and {name}", ex.example_id));
                }
                if ex.stage == Stage::Stage1 && !ex.input.contains(gpkit::MASK_TOKEN) {
                    fails.push(format!("{} input lacks the mask", ex.example_id));
                }
                if ex.output.contains(gpkit::MASK_TOKEN) {
                    fails.push(format!("{} output contains the mask", ex.example_id));
                }
                if ex.polarity == Polarity::Negative {
                    let gene = ex.provenance.iter().find_map(|p| p.strip_prefix("gene:"));
                    let phen = ex.provenance.iter().find_map(|p| p.strip_prefix("phenotype:"));
                    match (gene.and_then(|g| g.parse::<u64>().ok()), phen) {
                        (Some(g), Some(p)) if positives.contains(&(g, p.to_string())) => {
                            fails.push(format!("negative {} is a positive pair", ex.example_id))
                        }
                        (Some(_), Some(_)) => {}
                        _ => fails.push(format!("negative {} lacks a gene or phenotype", ex.example_id)),
                    }
                }
            }
        }
        let n: usize = counts.values().map(|c| c.0 + c.1).sum();
        let val: usize = counts.values().map(|c| c.1).sum();
        if n > 0 && val != config.val_size {
            fails.push(format!("{stage:?} validation has {val}, want {}", config.val_size));
        }
        for (kind, (tr, va)) in &counts {
            let expected = config.val_size as f64 * (tr + va) as f64 / n as f64;
            if (*va as f64 - expected).abs() > 1.0 {
                fails.push(format!("{kind} holds out {va}, expected {expected:.2}"));
            }
        }
    }
    if total != manifest.total_examples {
        fails.push(format!("files hold {total}, manifest says {}", manifest.total_examples));
    }
    (total, fails)
}

/// Scores `n` items per direction twice: once with answers that repeat the
/// first gold sentence, once with a fixed off-topic answer.
pub fn qa_echo_reports(
    store: &KnowledgeStore,
    n: usize,
    seed: u64,
) -> (gpkit::eval::EvalReport, gpkit::eval::EvalReport) {
    use gpkit::eval::{make_qa_items, score_qa, AnswerSet, Direction, ModelAnswer, QaScoring, Style};
    let mut items = make_qa_items(store, n, seed, Direction::PhenoToGene, Style::Question).unwrap();
    items.extend(make_qa_items(store, n, seed, Direction::GeneToPheno, Style::Question).unwrap());
    let answer = |id: &str, text: &str| ModelAnswer {
        item_id: id.to_string(),
        variant_index: 0,
        raw_text: text.to_string(),
        error: None,
    };
    let echo = AnswerSet::from_answers(items.iter().map(|i| answer(&i.item_id, &i.gold_sentences[0])));
    let wrong = AnswerSet::from_answers(items.iter().map(|i| answer(&i.item_id, "Nothing comes to mind here.")));
    let scoring = QaScoring::default();
    (
        score_qa(&items, &echo, &scoring).unwrap(),
        score_qa(&items, &wrong, &scoring).unwrap(),
    )
}

/// Relation items with exactly `positives` gold-YES entries out of `n`.
pub fn relation_items(n: usize, positives: usize, variants: usize) -> Vec<gpkit::eval::RelationItem> {
    (0..n)
        .map(|i| gpkit::eval::RelationItem {
            item_id: format!("rel-{i:04}"),
            gene: format!("GX{i}"),
            disease: format!("{} syndrome", word(i)),
            evidence: format!("GX{i} was studied."),
            gold: i < positives,
            prompt_variants: (0..variants).map(|v| format!("prompt {v} for item {i}")).collect(),
        })
        .collect()
}

pub fn relation_answers(
    items: &[gpkit::eval::RelationItem],
    mut text: impl FnMut(&gpkit::eval::RelationItem, usize) -> String,
) -> gpkit::eval::AnswerSet {
    let mut out = Vec::new();
    for item in items {
        for v in 0..item.prompt_variants.len() {
            out.push(gpkit::eval::ModelAnswer {
                item_id: item.item_id.clone(),
                variant_index: v as u32,
                raw_text: text(item, v),
                error: None,
            });
        }
    }
    gpkit::eval::AnswerSet::from_answers(out)
}

/// Accuracy under ORACLE_BEST and MAJORITY for random per-variant answers.
pub fn aggregation_accuracies(seed: u64) -> (f64, f64) {
    use gpkit::eval::{score_relation, Aggregation, YesNoKeywords};
    let mut r = rng(seed);
    let n = r.random_range(5..60);
    let variants = r.random_range(1..=5);
    let items = relation_items(n, r.random_range(0..=n), variants);
    let answers = relation_answers(&items, |_, _| {
        ["Yes, associated.", "No.", "Not related.", "It is unclear.", "True"][r.random_range(0..5)].to_string()
    });
    let acc = |mode| {
        score_relation(&items, &answers, mode, &YesNoKeywords::default())
            .unwrap()
            .metric("Accuracy")
            .unwrap()
    };
    (acc(Aggregation::OracleBest), acc(Aggregation::Majority))
}

pub fn gaussian_matrix(r: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| gaussian(r)).collect()).collect()
}

/// Largest absolute difference between `pca_project` and the Jacobi oracle
/// (coordinates, axes and variance ratios) on one random matrix.
pub fn pca_max_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.random_range(4..30);
    let d = r.random_range(2..12);
    let k = r.random_range(1..=d.min(n - 1).min(3));
    // Uneven column scales keep the leading eigenvalues well apart.
    let mut x = gaussian_matrix(&mut r, n, d);
    for row in &mut x {
        for (j, v) in row.iter_mut().enumerate() {
            *v = *v * (1.0 + 2.0 * j as f64) + 0.5;
        }
    }
    let got = gpkit::embed::pca_project(&x, k).unwrap();
    let want = oracle_pca(&x, k);
    let mut err = 0.0f64;
    for (a, b) in got.coords.iter().flatten().zip(want.coords.iter().flatten()) {
        err = err.max((a - b).abs());
    }
    for (a, b) in got.components.iter().flatten().zip(want.components.iter().flatten()) {
        err = err.max((a - b).abs());
    }
    for (a, b) in got.explained_variance_ratio.iter().zip(&want.ratios) {
        err = err.max((a - b).abs());
    }
    err
}

/// Absolute difference between `silhouette` and brute force on random
/// clustered points, some unlabelled.
pub fn silhouette_error(seed: u64, exec: gpkit::par::Execution) -> f64 {
    let mut r = rng(seed);
    let n = r.random_range(3..=200);
    let d = r.random_range(1..6);
    let k = r.random_range(2..=5);
    let x = gaussian_matrix(&mut r, n, d);
    let mut labels: Vec<Option<String>> = (0..n).map(|_| Some(format!("c{}", r.random_range(0..k)))).collect();
    for l in labels.iter_mut() {
        if r.random_bool(0.1) {
            *l = None;
        }
    }
    labels[0] = Some("c0".into());
    labels[1] = Some("c1".into());
    let got = gpkit::embed::silhouette(&x, &labels, gpkit::embed::Distance::Euclidean, exec).unwrap();
    let kept: Vec<usize> = (0..n).filter(|&i| labels[i].is_some()).collect();
    let pts: Vec<Vec<f64>> = kept.iter().map(|&i| x[i].clone()).collect();
    let ls: Vec<&str> = kept.iter().map(|&i| labels[i].as_deref().unwrap()).collect();
    (got - oracle_silhouette(&pts, &ls)).abs()
}

/// Four tissue clusters whose spread shrinks with every layer.
pub fn tightening_records(layers: u32) -> Vec<gpkit::embed::EmbeddingRecord> {
    use gpkit::embed::{EmbeddingRecord, EntityKind};
    let mut r = rng(99);
    let centers = [[0.0, 0.0, 0.0], [4.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 4.0]];
    let noise = gaussian_matrix(&mut r, 80, 3);
    let mut out = Vec::new();
    for layer in 0..layers {
        let spread = 3.0 / f64::from(1 << layer);
        for (i, z) in noise.iter().enumerate() {
            let c = centers[i % 4];
            out.push(EmbeddingRecord {
                entity_id: format!("e{i}"),
                kind: if i % 2 == 0 {
                    EntityKind::Gene
                } else {
                    EntityKind::Phenotype
                },
                layer,
                pair_id: Some(format!("p{}", i / 2)),
                tissue_label: Some(TISSUES[i % 4].to_string()),
                vector: (0..3).map(|j| c[j] + spread * z[j]).collect(),
            });
        }
    }
    out
}

pub struct ClientRun {
    pub retries: usize,
    pub requests: usize,
    pub peak_in_flight: usize,
    pub answered: usize,
    pub failed: usize,
    /// Report scored from the answers file read back from disk.
    pub replayed_report: String,
    /// Report scored from answers built in memory without the network.
    pub direct_report: String,
}

/// Sends QA prompts to a stub that fails the first `failures` requests with
/// 503 and otherwise answers with the first gold sentence for the prompt.
pub fn client_run(dir: &std::path::Path, max_in_flight: usize, failures: usize) -> ClientRun {
    use gpkit::client::{jobs_for_qa, replay_answers, run_batch, CompletionRequest, EndpointConfig, HttpCompleter};
    use gpkit::eval::{make_qa_items, score_qa, AnswerSet, Direction, ModelAnswer, QaScoring, Style};

    let store = synthetic_store(40, 30, 2, 8);
    let items = make_qa_items(&store, 30, 2, Direction::GeneToPheno, Style::Question).unwrap();
    let mut by_prompt: HashMap<String, String> = HashMap::new();
    for i in &items {
        by_prompt
            .entry(i.prompt_text.clone())
            .or_insert_with(|| i.gold_sentences[0].clone());
    }
    let lookup = Arc::new(by_prompt);
    let server_lookup = lookup.clone();
    let server = StubServer::start(Duration::from_millis(15), move |idx, prompt| {
        if idx < failures {
            Reply::Status(503)
        } else {
            Reply::Text(server_lookup.get(prompt).cloned().unwrap_or_default())
        }
    });
    let mut cfg = EndpointConfig::new(server.url.clone(), "stub-model");
    cfg.backoff_ms = 1;
    cfg.max_in_flight = max_in_flight;
    cfg.max_retries = 3;
    let completer = HttpCompleter::new(cfg).unwrap();
    let out = dir.join("answers.jsonl");
    let summary = run_batch(
        &jobs_for_qa(&items),
        &completer,
        &CompletionRequest::new(""),
        max_in_flight,
        &out,
    )
    .unwrap();

    let scoring = QaScoring::default();
    let replayed = score_qa(&items, &replay_answers(&out).unwrap(), &scoring).unwrap();
    let direct_answers = AnswerSet::from_answers(items.iter().map(|i| ModelAnswer {
        item_id: i.item_id.clone(),
        variant_index: 0,
        raw_text: lookup[&i.prompt_text].clone(),
        error: None,
    }));
    let direct = score_qa(&items, &direct_answers, &scoring).unwrap();
    ClientRun {
        retries: completer.retries(),
        requests: server.requests.load(Ordering::SeqCst),
        peak_in_flight: server.peak_in_flight.load(Ordering::SeqCst),
        answered: summary.answered,
        failed: summary.failed,
        replayed_report: replayed.to_json(),
        direct_report: direct.to_json(),
    }
}

pub fn data_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

/// Renders default manifests for the golden cases and returns every case
/// whose bytes differ from the checked-in file.
pub fn train_golden_mismatches() -> (usize, Vec<String>) {
    use gpkit::train::{train_manifest, ModelSize};
    let root = data_dir().join("train_corpus");
    let cases = [
        (1u8, ModelSize::Small, "small"),
        (2, ModelSize::Small, "small"),
        (2, ModelSize::Large, "large"),
    ];
    let mut fails = Vec::new();
    for (stage, size, label) in cases {
        let corpus = root.join(format!("stage{stage}.train.jsonl"));
        let m = train_manifest(stage, size, &[corpus], Some(&root), &Default::default(), "golden").unwrap();
        let golden = data_dir().join(format!("train_manifest.stage{stage}.{label}.json"));
        if m.to_json() != std::fs::read_to_string(&golden).unwrap() {
            fails.push(format!("{} differs:\n{}", golden.display(), m.to_json()));
        }
    }
    (cases.len(), fails)
}

pub struct ScaleRun {
    pub examples: usize,
    pub seconds: f64,
    pub peak_rss_kib: Option<u64>,
    pub bytes: u64,
}

/// Builds the full two-stage corpus for a store of `genes` genes with three
/// phenotype links each, writing to `dir`.
pub fn scale_run(dir: &std::path::Path, genes: usize) -> ScaleRun {
    use gpkit::corpus::{build_corpus, CorpusConfig, CorpusTemplates};
    let start = std::time::Instant::now();
    let store = synthetic_store(genes, (genes / 5).max(10), 3, 11);
    let mut config = CorpusConfig::new(1);
    config.val_size = 10_000.min(genes);
    let manifest = build_corpus(
        &store,
        &CorpusTemplates::defaults(),
        &config,
        dir,
        gpkit::par::Execution::default(),
        Default::default(),
    )
    .unwrap();
    ScaleRun {
        examples: manifest.total_examples,
        seconds: start.elapsed().as_secs_f64(),
        peak_rss_kib: vm_hwm_kib(),
        bytes: manifest.files.iter().map(|f| f.bytes).sum(),
    }
}

/// Data rows in a delimited file, counted without the library: every line
/// after the header.
pub fn data_rows(path: &std::path::Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

fn canonical_store(d: &DirtySources, exec: gpkit::par::Execution) -> Vec<u8> {
    use gpkit::ingest::{ingest_sources, SourceFile, SourceKind, SourceTableSpec};
    let sources = [
        SourceFile::with_default_spec(&d.gene_info, SourceKind::GeneInfo),
        SourceFile::with_default_spec(&d.gene_phenotype, SourceKind::GenePhenotype),
        SourceFile::new(&d.disgenet, SourceTableSpec::disgenet_gene_disease()),
        SourceFile::with_default_spec(&d.gene_protein, SourceKind::GeneProtein),
    ];
    let dbgap = [SourceFile::with_default_spec(&d.dbgap, SourceKind::DbgapAssoc)];
    let (builder, _) = ingest_sources(&sources, &dbgap, exec).unwrap();
    let mut out = Vec::new();
    builder.freeze().write_canonical(&mut out).unwrap();
    out
}

/// Row conservation for the five parsers (gene info, both gene-phenotype
/// layouts, gene-protein, evidence) plus the cross-check table, against
/// independently counted rows; then store equality under shuffled input.
pub fn ingest_conservation_failures(dir: &std::path::Path, genes: usize) -> (usize, Vec<String>) {
    use gpkit::ingest::{
        crosscheck, ingest_sources, parse_evidence, parse_gene_info, parse_gene_phenotype, parse_gene_protein,
        SourceFile, SourceKind, SourceTableSpec,
    };
    use gpkit::par::Execution;
    let d = write_dirty_sources(&dir.join("plain"), genes, None);
    let spec = SourceTableSpec::default_for;
    let mut fails = Vec::new();
    let mut check = |name: &str, path: &std::path::Path, accepted: usize, rejected: usize, total: usize| {
        let rows = data_rows(path);
        if accepted + rejected != rows || total != rows || rejected == 0 {
            fails.push(format!(
                "{name}: accepted {accepted} + rejected {rejected} vs {rows} rows (reported {total})"
            ));
        }
    };
    let g = parse_gene_info(&d.gene_info, &spec(SourceKind::GeneInfo)).unwrap();
    check(
        "gene_info",
        &d.gene_info,
        g.accepted_rows,
        g.rejects.len(),
        g.total_rows,
    );
    let p = parse_gene_phenotype(&d.gene_phenotype, &spec(SourceKind::GenePhenotype)).unwrap();
    check(
        "gene_phenotype",
        &d.gene_phenotype,
        p.accepted_rows,
        p.rejects.len(),
        p.total_rows,
    );
    let p = parse_gene_phenotype(&d.disgenet, &SourceTableSpec::disgenet_gene_disease()).unwrap();
    check("disgenet", &d.disgenet, p.accepted_rows, p.rejects.len(), p.total_rows);
    let p = parse_gene_protein(&d.gene_protein, &spec(SourceKind::GeneProtein)).unwrap();
    check(
        "gene_protein",
        &d.gene_protein,
        p.accepted_rows,
        p.rejects.len(),
        p.total_rows,
    );
    let e = parse_evidence(&d.evidence, &spec(SourceKind::Evidence)).unwrap();
    check("evidence", &d.evidence, e.accepted_rows, e.rejects.len(), e.total_rows);
    let sources = [
        SourceFile::with_default_spec(&d.gene_info, SourceKind::GeneInfo),
        SourceFile::with_default_spec(&d.gene_phenotype, SourceKind::GenePhenotype),
    ];
    let (mut builder, _) = ingest_sources(&sources, &[], Execution::Sequential).unwrap();
    let cc = crosscheck(&mut builder, &d.dbgap, &spec(SourceKind::DbgapAssoc)).unwrap();
    check("dbgap", &d.dbgap, cc.accepted_rows, cc.rejects.len(), cc.total_rows);

    let reference = canonical_store(&d, Execution::Sequential);
    let mut checks = 6;
    for seed in 1..=3 {
        checks += 1;
        let shuffled = write_dirty_sources(&dir.join(format!("shuffled{seed}")), genes, Some(seed));
        if canonical_store(&shuffled, Execution::Parallel) != reference {
            fails.push(format!("store differs for shuffle seed {seed}"));
        }
    }
    (checks, fails)
}
