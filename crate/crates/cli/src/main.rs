use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gpkit::embed::Distance;
use gpkit::eval::Aggregation;
use gpkit::metrics::Smoothing;
use gpkit::par::Execution;
use gpkit::train::{AdapterScheme, ModelSize};

mod commands;
mod config;
mod runlog;

use config::{ColorBy, DirectionChoice, RunConfig, StyleChoice};
use runlog::RunLog;

/// Genotype-phenotype corpus construction and evaluation.
#[derive(Debug, Parser)]
#[command(name = "gpkit", version)]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every random choice. Required by build-corpus and make-tasks.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (1 = sequential).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse source tables into a canonical knowledge store.
    Ingest(IngestArgs),
    /// Generate the two-stage instruction corpus from a store.
    BuildCorpus(BuildCorpusArgs),
    /// Build QA and relation evaluation items.
    MakeTasks(MakeTasksArgs),
    /// Send evaluation prompts to a completion endpoint.
    RunEval(RunEvalArgs),
    /// Score model answers against evaluation items.
    Score(ScoreArgs),
    /// Layer-wise embedding statistics and scatter plots.
    EmbedReport(EmbedReportArgs),
    /// Emit a fine-tuning manifest for an external trainer.
    TrainManifest(TrainManifestArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::BuildCorpus(_) => "build-corpus",
            Command::MakeTasks(_) => "make-tasks",
            Command::RunEval(_) => "run-eval",
            Command::Score(_) => "score",
            Command::EmbedReport(_) => "embed-report",
            Command::TrainManifest(_) => "train-manifest",
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// NCBI gene_info-style table (repeatable).
    #[arg(long, value_name = "FILE")]
    gene_info: Vec<PathBuf>,
    /// OMIM-style gene-phenotype table (repeatable).
    #[arg(long, value_name = "FILE")]
    gene_phenotype: Vec<PathBuf>,
    /// DisGeNET-style gene-disease table (repeatable).
    #[arg(long, value_name = "FILE")]
    disgenet: Vec<PathBuf>,
    /// UniProt-style gene-protein table (repeatable).
    #[arg(long, value_name = "FILE")]
    gene_protein: Vec<PathBuf>,
    /// dbGaP-style association table used to verify edges.
    #[arg(long, value_name = "FILE")]
    dbgap: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildCorpusArgs {
    /// Canonical store written by `ingest`.
    #[arg(long, value_name = "FILE")]
    store: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    template_dir: Option<PathBuf>,
    /// Negative pairs per positive pair.
    #[arg(long)]
    negative_ratio: Option<f64>,
    /// Validation examples per stage.
    #[arg(long)]
    val_size: Option<usize>,
    /// Balance positives and negatives before splitting.
    #[arg(long)]
    balance: bool,
    /// Use only verified gene-phenotype edges for triples.
    #[arg(long)]
    verified_only: bool,
}

#[derive(Debug, Args)]
pub struct MakeTasksArgs {
    #[arg(long, value_name = "FILE")]
    store: Option<PathBuf>,
    /// QA items per direction; 0 skips QA.
    #[arg(long)]
    qa_n: Option<usize>,
    #[arg(long, value_enum)]
    direction: Option<DirectionChoice>,
    #[arg(long, value_enum)]
    style: Option<StyleChoice>,
    /// Labeled evidence sentences for relation items.
    #[arg(long, value_name = "FILE")]
    evidence: Option<PathBuf>,
    /// Prompt variants per relation item.
    #[arg(long)]
    variants: Option<usize>,
    #[arg(long, value_name = "FILE")]
    variant_templates: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunEvalArgs {
    /// QA items file.
    #[arg(
        long,
        value_name = "FILE",
        conflicts_with = "relation",
        required_unless_present = "relation"
    )]
    qa: Option<PathBuf>,
    /// Relation items file.
    #[arg(long, value_name = "FILE")]
    relation: Option<PathBuf>,
    /// Completion URL.
    #[arg(long)]
    endpoint_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the bearer token.
    #[arg(long, value_name = "VAR")]
    auth_env: Option<String>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long)]
    timeout_secs: Option<f64>,
    #[arg(long)]
    max_new_tokens: Option<u32>,
    /// Answers file name inside the output directory.
    #[arg(long, default_value = "answers.jsonl")]
    answers: String,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// QA items and answers.
    #[arg(long, num_args = 2, value_names = ["ITEMS", "ANSWERS"], required_unless_present = "relation")]
    qa: Vec<PathBuf>,
    /// Relation items and answers.
    #[arg(long, num_args = 2, value_names = ["ITEMS", "ANSWERS"])]
    relation: Vec<PathBuf>,
    #[arg(long, value_parser = parse_aggregation)]
    aggregation: Option<Aggregation>,
    #[arg(long, value_name = "FILE")]
    stoplist: Option<PathBuf>,
    #[arg(long)]
    max_n: Option<usize>,
    #[arg(long, value_parser = parse_smoothing)]
    smoothing: Option<Smoothing>,
    /// Affirmative keywords, one per line.
    #[arg(long, value_name = "FILE", requires = "negative")]
    affirmative: Option<PathBuf>,
    /// Negative keywords, one per line.
    #[arg(long, value_name = "FILE", requires = "affirmative")]
    negative: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbedReportArgs {
    /// Embedding export (JSON lines with a header record).
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    /// Comma-separated layers; default all.
    #[arg(long, value_delimiter = ',')]
    layers: Vec<u32>,
    #[arg(long, value_parser = parse_distance)]
    metric: Option<Distance>,
    #[arg(long, value_enum)]
    color_by: Option<ColorBy>,
}

#[derive(Debug, Args)]
pub struct TrainManifestArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    stage: u8,
    #[arg(long, value_parser = parse_size)]
    size: Option<ModelSize>,
    /// Corpus files; default `<corpus-dir>/stageN.{train,validation}.jsonl`.
    #[arg(long, value_name = "FILE")]
    corpus: Vec<PathBuf>,
    /// Directory holding the corpus; defaults to --out.
    #[arg(long, value_name = "DIR")]
    corpus_dir: Option<PathBuf>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<u32>,
    #[arg(long, value_parser = parse_adapter)]
    adapter: Option<AdapterScheme>,
    #[arg(long)]
    trainable_fraction: Option<f64>,
    #[arg(long)]
    early_stop_epochs: Option<f64>,
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_aggregation(s: &str) -> Result<Aggregation, String> {
    parse_enum(&s.to_uppercase().replace('-', "_"))
}

fn parse_smoothing(s: &str) -> Result<Smoothing, String> {
    parse_enum(&s.to_lowercase().replace('-', "_"))
}

fn parse_distance(s: &str) -> Result<Distance, String> {
    parse_enum(&s.to_lowercase())
}

fn parse_size(s: &str) -> Result<ModelSize, String> {
    parse_enum(&s.to_lowercase())
}

fn parse_adapter(s: &str) -> Result<AdapterScheme, String> {
    parse_enum(&s.to_uppercase().replace('-', "_"))
}

/// How a command failed: bad invocation (exit 1) or bad data (exit 2).
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Data(e) => format!("{e:#}"),
        }
    }
}

/// Everything a command needs besides its own flags.
pub struct Ctx {
    pub cfg: RunConfig,
    pub hash: String,
    pub out: PathBuf,
    pub exec: Execution,
    pub log: RunLog,
}

fn effective_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| Failure::Usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    commands::apply_flags(&cli.command, &mut cfg);
    if cfg.jobs == Some(0) {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    Ok(cfg)
}

fn run(cli: Cli) -> ExitCode {
    let name = cli.command.name();
    let cfg = match effective_config(&cli) {
        Ok(c) => c,
        Err(f) => {
            eprintln!("error: {}", f.message());
            return ExitCode::from(f.code());
        }
    };
    let mut ctx = Ctx {
        hash: cfg.hash(),
        out: cfg.out_dir(),
        exec: if cfg.jobs == Some(1) {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
        log: RunLog::new(name),
        cfg,
    };
    ctx.log.set("config_hash", &ctx.hash);
    ctx.log.set("config", ctx.cfg.echo());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.cfg.jobs.unwrap_or(0))
        .build();
    let result = match pool {
        Ok(pool) => pool.install(|| commands::dispatch(&cli.command, &mut ctx)),
        Err(e) => Err(Failure::Data(e.into())),
    };
    let code = match &result {
        Ok(outputs) => {
            ctx.log.outputs(outputs);
            ctx.log.set("status", "ok");
            0
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ctx.log.set("status", "error");
            ctx.log.set("error", f.message());
            f.code()
        }
    };
    ctx.log.set("exit_code", code);
    // Usage errors found before any work leave no trace on disk.
    if !matches!(result, Err(Failure::Usage(_))) {
        if let Err(e) = ctx.log.write(&ctx.out) {
            eprintln!("warning: cannot write run log: {e}");
        }
    }
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    run(cli)
}
