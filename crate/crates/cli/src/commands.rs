use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use gpkit::client::{jobs_for_qa, jobs_for_relation, replay_answers, CompletionRequest, EndpointConfig, HttpCompleter};
use gpkit::corpus::{build_corpus, CorpusConfig, CorpusTemplates};
use gpkit::embed::{layer_report, load_embeddings, render_scatter_svg};
use gpkit::eval::{
    make_qa_items, make_relation_items, score_qa, score_relation, Direction, EvalReport, QaItem, QaScoring,
    RelationItem, RelationVariants, Style, YesNoKeywords,
};
use gpkit::ingest::{ingest_sources, parse_evidence, write_rejects, SourceFile, SourceKind, SourceTableSpec};
use gpkit::jsonl;
use gpkit::metrics::Stoplist;
use gpkit::store::KnowledgeStore;
use gpkit::train::{train_manifest, TrainOverrides};
use serde_json::json;

use crate::config::{ColorBy, DirectionChoice, RunConfig, StyleChoice};
use crate::{Command, Ctx, Failure};

type Outputs = Result<Vec<PathBuf>, Failure>;

/// Folds subcommand flags into the config so they win over file values.
pub fn apply_flags(command: &Command, cfg: &mut RunConfig) {
    fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
        if let Some(v) = v {
            *slot = v.clone();
        }
    }
    fn set_opt<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
        if v.is_some() {
            *slot = v.clone();
        }
    }
    fn set_list<T: Clone>(slot: &mut Vec<T>, v: &[T]) {
        if !v.is_empty() {
            *slot = v.to_vec();
        }
    }
    match command {
        Command::Ingest(a) => {
            let i = &mut cfg.ingest;
            set_list(&mut i.gene_info, &a.gene_info);
            set_list(&mut i.gene_phenotype, &a.gene_phenotype);
            set_list(&mut i.disgenet, &a.disgenet);
            set_list(&mut i.gene_protein, &a.gene_protein);
            set_list(&mut i.dbgap, &a.dbgap);
        }
        Command::BuildCorpus(a) => {
            set_opt(&mut cfg.paths.store, &a.store);
            set_opt(&mut cfg.paths.template_dir, &a.template_dir);
            set(&mut cfg.corpus.negative_ratio, &a.negative_ratio);
            set(&mut cfg.corpus.val_size, &a.val_size);
            cfg.corpus.balance |= a.balance;
            cfg.corpus.verified_only |= a.verified_only;
        }
        Command::MakeTasks(a) => {
            set_opt(&mut cfg.paths.store, &a.store);
            set_opt(&mut cfg.paths.evidence, &a.evidence);
            set_opt(&mut cfg.paths.variant_templates, &a.variant_templates);
            set(&mut cfg.eval.qa_n, &a.qa_n);
            set(&mut cfg.eval.direction, &a.direction);
            set(&mut cfg.eval.style, &a.style);
            set(&mut cfg.eval.relation_variants, &a.variants);
        }
        Command::RunEval(a) => {
            if let Some(url) = &a.endpoint_url {
                let model = a.model.clone().unwrap_or_default();
                match &mut cfg.endpoint {
                    Some(e) => e.base_url = url.clone(),
                    None => cfg.endpoint = Some(EndpointConfig::new(url.clone(), model)),
                }
            }
            if let Some(e) = &mut cfg.endpoint {
                set(&mut e.model_name, &a.model);
                set_opt(&mut e.auth_env, &a.auth_env);
                set(&mut e.max_in_flight, &a.max_in_flight);
                set(&mut e.max_retries, &a.max_retries);
                set(&mut e.timeout_secs, &a.timeout_secs);
            }
            set(&mut cfg.eval.max_new_tokens, &a.max_new_tokens);
        }
        Command::Score(a) => {
            set_opt(&mut cfg.paths.stoplist, &a.stoplist);
            set_opt(&mut cfg.paths.affirmative, &a.affirmative);
            set_opt(&mut cfg.paths.negative, &a.negative);
            set(&mut cfg.eval.aggregation, &a.aggregation);
            set(&mut cfg.eval.max_n, &a.max_n);
            set(&mut cfg.eval.smoothing, &a.smoothing);
        }
        Command::EmbedReport(a) => {
            set_opt(&mut cfg.paths.embeddings, &a.embeddings);
            set_list(&mut cfg.embed.layers, &a.layers);
            set(&mut cfg.embed.metric, &a.metric);
            set(&mut cfg.embed.color_by, &a.color_by);
        }
        Command::TrainManifest(a) => {
            let t = &mut cfg.train;
            set(&mut t.size, &a.size);
            set_opt(&mut t.learning_rate, &a.learning_rate);
            set_opt(&mut t.batch_size, &a.batch_size);
            set_opt(&mut t.adapter, &a.adapter);
            set_opt(&mut t.trainable_fraction, &a.trainable_fraction);
            set_opt(&mut t.early_stop_epochs, &a.early_stop_epochs);
        }
    }
}

pub fn dispatch(command: &Command, ctx: &mut Ctx) -> Outputs {
    match command {
        Command::Ingest(_) => ingest(ctx),
        Command::BuildCorpus(_) => build(ctx),
        Command::MakeTasks(_) => make_tasks(ctx),
        Command::RunEval(a) => run_eval(ctx, a.qa.as_deref(), a.relation.as_deref(), &a.answers),
        Command::Score(a) => score(ctx, &a.qa, &a.relation),
        Command::EmbedReport(_) => embed_report(ctx),
        Command::TrainManifest(a) => train(ctx, a.stage, &a.corpus, a.corpus_dir.as_deref()),
    }
}

fn required_seed(ctx: &Ctx, command: &str) -> Result<u64, Failure> {
    ctx.cfg
        .seed
        .ok_or_else(|| Failure::Usage(format!("{command} requires --seed (or `seed` in the config file)")))
}

fn required_path(p: &Option<PathBuf>, flag: &str, command: &str) -> Result<PathBuf, Failure> {
    p.clone()
        .ok_or_else(|| Failure::Usage(format!("{command} requires {flag}")))
}

/// Fails before any work if an input is missing, then logs its digest.
fn check_inputs(ctx: &mut Ctx, paths: &[&Path]) -> Result<(), Failure> {
    for p in paths {
        if !p.exists() {
            return Err(Failure::Data(anyhow::anyhow!("input {} does not exist", p.display())));
        }
    }
    for p in paths {
        if p.is_file() {
            ctx.log.input(p);
        }
    }
    Ok(())
}

fn ensure_out(ctx: &Ctx) -> Result<(), Failure> {
    std::fs::create_dir_all(&ctx.out).with_context(|| format!("cannot create {}", ctx.out.display()))?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn load_store(ctx: &mut Ctx, command: &str) -> Result<KnowledgeStore, Failure> {
    let path = required_path(&ctx.cfg.paths.store, "--store", command)?;
    check_inputs(ctx, &[&path])?;
    Ok(KnowledgeStore::import(&path)?)
}

fn ingest(ctx: &mut Ctx) -> Outputs {
    let i = ctx.cfg.ingest.clone();
    let mut sources = Vec::new();
    let mut dbgap = Vec::new();
    let defaults = [
        (&i.gene_info, SourceTableSpec::default_for(SourceKind::GeneInfo)),
        (
            &i.gene_phenotype,
            SourceTableSpec::default_for(SourceKind::GenePhenotype),
        ),
        (&i.disgenet, SourceTableSpec::disgenet_gene_disease()),
        (&i.gene_protein, SourceTableSpec::default_for(SourceKind::GeneProtein)),
    ];
    for (paths, spec) in defaults {
        sources.extend(paths.iter().map(|p| SourceFile::new(p, spec.clone())));
    }
    dbgap.extend(
        i.dbgap
            .iter()
            .map(|p| SourceFile::with_default_spec(p, SourceKind::DbgapAssoc)),
    );
    for t in &i.tables {
        let f = SourceFile::new(&t.path, t.spec.clone());
        match t.spec.source {
            SourceKind::DbgapAssoc => dbgap.push(f),
            _ => sources.push(f),
        }
    }
    if sources.is_empty() {
        return Err(Failure::Usage(
            "ingest needs at least one source table (--gene-info, --gene-phenotype, ...)".into(),
        ));
    }
    let paths: Vec<&Path> = sources.iter().chain(&dbgap).map(|s| s.path.as_path()).collect();
    check_inputs(ctx, &paths)?;

    let (builder, report) = ingest_sources(&sources, &dbgap, ctx.exec)?;
    let store = builder.freeze();
    ensure_out(ctx)?;
    let store_path = ctx.out.join("store.jsonl");
    store.export(&store_path)?;
    let rejects_path = ctx.out.join("rejects.tsv");
    write_rejects(&rejects_path, &report.rejects)?;
    let report_path = ctx.out.join("ingest_report.json");
    write_json(
        &report_path,
        &json!({
            "config_hash": ctx.hash,
            "conserved": report.is_conserved(),
            "counts": report.counts,
            "rejected_rows": report.rejects.len(),
            "crosscheck": report.crosscheck.as_ref().map(|c| json!({
                "total_rows": c.total_rows,
                "accepted_rows": c.accepted_rows,
                "verified_edges": c.verified_edges,
                "unverified_edges": c.unverified_edges,
                "added_edges": c.added_edges,
                "added_phenotypes": c.added_phenotypes,
            })),
            "store": {
                "genes": store.gene_count(),
                "proteins": store.protein_count(),
                "phenotypes": store.phenotype_count(),
                "edges": store.edge_count(),
            },
        }),
    )?;
    Ok(vec![store_path, rejects_path, report_path])
}

fn build(ctx: &mut Ctx) -> Outputs {
    let seed = required_seed(ctx, "build-corpus")?;
    let store = load_store(ctx, "build-corpus")?;
    let templates = match ctx.cfg.paths.template_dir.clone() {
        Some(dir) => {
            check_inputs(ctx, &[&dir])?;
            CorpusTemplates::load_dir(&dir)?
        }
        None => CorpusTemplates::defaults(),
    };
    let c = &ctx.cfg.corpus;
    let config = CorpusConfig {
        seed,
        negative_ratio: c.negative_ratio,
        val_size: c.val_size,
        balance: c.balance,
        verified_only: c.verified_only,
    };
    let echo = BTreeMap::from([("run_config_hash".to_string(), ctx.hash.clone())]);
    let manifest = build_corpus(&store, &templates, &config, &ctx.out, ctx.exec, echo)?;
    let mut outputs: Vec<PathBuf> = manifest.files.iter().map(|f| ctx.out.join(&f.name)).collect();
    outputs.push(ctx.out.join("skipped.tsv"));
    outputs.push(ctx.out.join("manifest.json"));
    ctx.log.set("total_examples", manifest.total_examples);
    Ok(outputs)
}

fn make_tasks(ctx: &mut Ctx) -> Outputs {
    let seed = required_seed(ctx, "make-tasks")?;
    let e = ctx.cfg.eval.clone();
    let evidence_path = ctx.cfg.paths.evidence.clone();
    if e.qa_n == 0 && evidence_path.is_none() {
        return Err(Failure::Usage(
            "make-tasks has nothing to do: --qa-n is 0 and no --evidence given".into(),
        ));
    }
    let store = load_store(ctx, "make-tasks")?;
    ensure_out(ctx)?;
    let mut outputs = Vec::new();
    let mut summary = json!({ "config_hash": ctx.hash, "seed": seed });

    if e.qa_n > 0 {
        let directions: &[Direction] = match e.direction {
            DirectionChoice::P2g => &[Direction::PhenoToGene],
            DirectionChoice::G2p => &[Direction::GeneToPheno],
            DirectionChoice::Both => &[Direction::PhenoToGene, Direction::GeneToPheno],
        };
        let style = match e.style {
            StyleChoice::Question => Style::Question,
            StyleChoice::Completion => Style::Completion,
        };
        let mut items = Vec::new();
        for &d in directions {
            items.extend(make_qa_items(&store, e.qa_n, seed, d, style)?);
        }
        let path = ctx.out.join("qa_items.jsonl");
        jsonl::write_all(&path, &items)?;
        summary["qa"] = json!({
            "items": items.len(),
            "per_direction": e.qa_n,
            "directions": directions.iter().map(|d| d.label()).collect::<Vec<_>>(),
            "style": style.label(),
        });
        outputs.push(path);
    }

    if let Some(path) = evidence_path {
        check_inputs(ctx, &[&path])?;
        let variants = match ctx.cfg.paths.variant_templates.clone() {
            Some(p) => {
                check_inputs(ctx, &[&p])?;
                RelationVariants::load(&p)?
            }
            None => RelationVariants::default(),
        };
        let spec = ctx
            .cfg
            .ingest
            .evidence_spec
            .clone()
            .unwrap_or_else(|| SourceTableSpec::default_for(SourceKind::Evidence));
        let parsed = parse_evidence(&path, &spec)?;
        let (items, screening) = make_relation_items(&parsed.items, &store, &variants, e.relation_variants, seed)?;
        let items_path = ctx.out.join("relation_items.jsonl");
        jsonl::write_all(&items_path, &items)?;
        let positives = items.iter().filter(|i| i.gold).count();
        summary["relation"] = json!({
            "items": items.len(),
            "positives": positives,
            "variants_per_item": e.relation_variants,
            "variant_digest": variants.digest,
            "evidence_rows": parsed.total_rows,
            "evidence_rejected": parsed.rejects.len(),
            "screening": screening,
        });
        outputs.push(items_path);
    }
    let summary_path = ctx.out.join("tasks.json");
    write_json(&summary_path, &summary)?;
    outputs.push(summary_path);
    Ok(outputs)
}

fn run_eval(ctx: &mut Ctx, qa: Option<&Path>, relation: Option<&Path>, answers: &str) -> Outputs {
    let endpoint =
        ctx.cfg.endpoint.clone().ok_or_else(|| {
            Failure::Usage("run-eval needs --endpoint-url and --model, or an [endpoint] section".into())
        })?;
    if endpoint.model_name.trim().is_empty() {
        return Err(Failure::Usage("run-eval requires --model".into()));
    }
    let items_path = qa.or(relation).expect("clap requires one of --qa/--relation");
    check_inputs(ctx, &[items_path])?;
    let jobs = if qa.is_some() {
        jobs_for_qa(&jsonl::read_all::<QaItem>(items_path)?)
    } else {
        jobs_for_relation(&jsonl::read_all::<RelationItem>(items_path)?)
    };
    let completer = HttpCompleter::new(endpoint.clone())?;
    let template = CompletionRequest {
        max_new_tokens: ctx.cfg.eval.max_new_tokens,
        temperature: ctx.cfg.eval.temperature,
        ..CompletionRequest::new("")
    };
    ensure_out(ctx)?;
    let answers_path = ctx.out.join(answers);
    let summary = gpkit::client::run_batch(&jobs, &completer, &template, endpoint.max_in_flight, &answers_path)?;
    let meta_path = ctx.out.join(format!("{answers}.meta.json"));
    write_json(
        &meta_path,
        &json!({
            "config_hash": ctx.hash,
            "items": items_path.display().to_string(),
            "model_name": endpoint.model_name,
            "prompts": jobs.len(),
            "answered": summary.answered,
            "failed": summary.failed,
            "retries": completer.retries(),
        }),
    )?;
    ctx.log.set("answered", summary.answered);
    ctx.log.set("failed", summary.failed);
    if summary.answered == 0 {
        return Err(Failure::Data(anyhow::anyhow!(
            "every request failed; see {}",
            answers_path.display()
        )));
    }
    Ok(vec![answers_path, meta_path])
}

fn echo_inputs(report: &mut EvalReport, ctx: &Ctx, items: &Path, answers: &Path) -> anyhow::Result<()> {
    report.config.insert("run_config_hash".into(), ctx.hash.clone());
    for (key, p) in [("items_sha256", items), ("answers_sha256", answers)] {
        let bytes = std::fs::read(p).with_context(|| format!("cannot read {}", p.display()))?;
        report.config.insert(key.into(), gpkit::sha256_hex(&bytes));
    }
    Ok(())
}

fn score(ctx: &mut Ctx, qa: &[PathBuf], relation: &[PathBuf]) -> Outputs {
    let all: Vec<&Path> = qa.iter().chain(relation).map(PathBuf::as_path).collect();
    check_inputs(ctx, &all)?;
    let both = !qa.is_empty() && !relation.is_empty();
    let mut outputs = Vec::new();
    if let [items_path, answers_path] = qa {
        let stoplist = match ctx.cfg.paths.stoplist.clone() {
            Some(p) => {
                check_inputs(ctx, &[&p])?;
                Stoplist::from_lines(&std::fs::read_to_string(&p)?)
            }
            None => Stoplist::default(),
        };
        let scoring = QaScoring {
            max_n: ctx.cfg.eval.max_n,
            smoothing: ctx.cfg.eval.smoothing,
            stoplist,
        };
        let items: Vec<QaItem> = jsonl::read_all(items_path)?;
        let answers = replay_answers(answers_path)?;
        let mut report = score_qa(&items, &answers, &scoring)?;
        echo_inputs(&mut report, ctx, items_path, answers_path)?;
        let dir = if both { ctx.out.join("qa") } else { ctx.out.clone() };
        report.write(&dir)?;
        for (k, v) in &report.metrics {
            ctx.log
                .set(&format!("metric.{k}"), v.map_or("null".into(), |v| v.to_string()));
        }
        outputs.push(dir.join("report.json"));
        outputs.push(dir.join("items.tsv"));
    }
    if let [items_path, answers_path] = relation {
        let keywords = match (ctx.cfg.paths.affirmative.clone(), ctx.cfg.paths.negative.clone()) {
            (Some(a), Some(n)) => {
                check_inputs(ctx, &[&a, &n])?;
                YesNoKeywords::from_lines(&std::fs::read_to_string(&a)?, &std::fs::read_to_string(&n)?)
            }
            (None, None) => YesNoKeywords::default(),
            _ => {
                return Err(Failure::Usage(
                    "affirmative and negative keyword files must be given together".into(),
                ))
            }
        };
        let items: Vec<RelationItem> = jsonl::read_all(items_path)?;
        let answers = replay_answers(answers_path)?;
        let mut report = score_relation(&items, &answers, ctx.cfg.eval.aggregation, &keywords)?;
        echo_inputs(&mut report, ctx, items_path, answers_path)?;
        let dir = if both {
            ctx.out.join("relation")
        } else {
            ctx.out.clone()
        };
        report.write(&dir)?;
        for (k, v) in &report.metrics {
            ctx.log
                .set(&format!("metric.{k}"), v.map_or("null".into(), |v| v.to_string()));
        }
        outputs.push(dir.join("report.json"));
        outputs.push(dir.join("items.tsv"));
    }
    Ok(outputs)
}

fn embed_report(ctx: &mut Ctx) -> Outputs {
    let path = required_path(&ctx.cfg.paths.embeddings, "--embeddings", "embed-report")?;
    check_inputs(ctx, &[&path])?;
    let export = load_embeddings(&path)?;
    let layers = if ctx.cfg.embed.layers.is_empty() {
        export.layers()
    } else {
        ctx.cfg.embed.layers.clone()
    };
    let report = layer_report(&export.records, &layers, ctx.cfg.embed.metric, ctx.exec)?;
    ensure_out(ctx)?;
    let mut outputs = Vec::new();
    for stats in &report.layers {
        let coords: Vec<(f64, f64)> = stats.points.iter().map(|p| (p.x, p.y)).collect();
        let labels: Vec<String> = stats
            .points
            .iter()
            .map(|p| match ctx.cfg.embed.color_by {
                ColorBy::Tissue => p.tissue_label.clone().unwrap_or_else(|| "unlabeled".into()),
                ColorBy::Pair => p.pair_id.clone().unwrap_or_else(|| "unpaired".into()),
                ColorBy::Kind => format!("{:?}", p.kind).to_lowercase(),
            })
            .collect();
        let svg_path = ctx.out.join(format!("layer_{}.svg", stats.layer));
        let title = format!("{} layer {}", export.model, stats.layer);
        render_scatter_svg(
            &coords,
            &labels,
            &title,
            &format!("config_hash={}", ctx.hash),
            &svg_path,
        )?;
        outputs.push(svg_path);
    }
    let json_path = ctx.out.join("embed_report.json");
    write_json(
        &json_path,
        &json!({
            "config_hash": ctx.hash,
            "model": export.model,
            "pooling": export.pooling,
            "total_rows": export.total_rows,
            "rejects": export.rejects,
            "report": report,
        }),
    )?;
    outputs.insert(0, json_path);
    Ok(outputs)
}

fn train(ctx: &mut Ctx, stage: u8, corpus: &[PathBuf], corpus_dir: Option<&Path>) -> Outputs {
    let (files, root) = if corpus.is_empty() {
        let dir = corpus_dir.map(Path::to_path_buf).unwrap_or_else(|| ctx.out.clone());
        let files = ["train", "validation"]
            .iter()
            .map(|split| dir.join(format!("stage{stage}.{split}.jsonl")))
            .collect::<Vec<_>>();
        (files, Some(dir))
    } else {
        (corpus.to_vec(), None)
    };
    let refs: Vec<&Path> = files.iter().map(PathBuf::as_path).collect();
    check_inputs(ctx, &refs)?;
    let t = &ctx.cfg.train;
    let overrides = TrainOverrides {
        learning_rate: t.learning_rate,
        batch_size: t.batch_size,
        adapter: t.adapter,
        trainable_fraction: t.trainable_fraction,
        early_stop_epochs: t.early_stop_epochs,
    };
    let manifest = train_manifest(stage, t.size, &files, root.as_deref(), &overrides, &ctx.hash)?;
    ensure_out(ctx)?;
    let path = ctx.out.join(format!("train_manifest.stage{stage}.json"));
    std::fs::write(&path, manifest.to_json()).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(vec![path])
}
