//! `harvest` operator command line.
//!
//! Results go to stdout as JSON; diagnostics go to stderr. Exit codes:
//! 0 success, 1 usage error, 2 data error, 3 provider error, 4 a
//! `--min-*` threshold was not met.

mod error;

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use harvest_core::corpus::{chunk_documents, corpus_stats, load_corpus, CorpusFormat};
use harvest_core::embedding::build_embedder;
use harvest_core::eval::{
    load_question_bank, run_benchmark, save_question_bank, synthesize_bank, BenchmarkOptions, Criterion, Pipeline,
    DEFAULT_RECALL_K,
};
use harvest_core::knowledge::IndexSpec;
use harvest_core::llm::build_chat_model;
use harvest_core::rag::answer_query;
use harvest_core::vectorstore::{IndexKind, DEFAULT_NPROBE};
use harvest_core::{ChatModel, ChunkParams, Embedder, KnowledgeBase, RagParams};
use harvest_service::ServiceConfig;
use serde_json::json;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "harvest", version, about = "Build, query and benchmark a retrieval-augmented knowledge base")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Chunk, embed and index a corpus.
    Ingest(IngestArgs),
    /// Answer one question against an index.
    Query(QueryArgs),
    /// Run the benchmark over a question bank.
    Eval(EvalArgs),
    /// Print corpus statistics.
    Stats(StatsArgs),
    /// Generate a question bank whose answers are chunk first sentences.
    SynthBank(SynthBankArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct ProviderArgs {
    /// Service config file whose provider definitions to use.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ProviderArgs {
    fn load(&self) -> Result<ServiceConfig, CliError> {
        match &self.config {
            Some(path) => Ok(ServiceConfig::load(path)?),
            None => Ok(ServiceConfig::default()),
        }
    }
}

#[derive(Debug, Args)]
struct CorpusArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Defaults to `directory` for directories and `jsonl` for files.
    #[arg(long, value_parser = parse_format)]
    format: Option<CorpusFormat>,
    #[arg(long, default_value_t = 1200)]
    chunk_size: usize,
    #[arg(long, default_value_t = 200)]
    overlap: usize,
}

impl CorpusArgs {
    fn chunk_params(&self) -> Result<ChunkParams, CliError> {
        Ok(ChunkParams::new(self.chunk_size, self.overlap)?)
    }

    fn load(&self) -> Result<Vec<harvest_core::Document>, CliError> {
        let format = self.format.unwrap_or_else(|| CorpusFormat::detect(&self.corpus));
        Ok(load_corpus(&self.corpus, format)?)
    }
}

fn parse_format(s: &str) -> Result<CorpusFormat, String> {
    match s {
        "jsonl" => Ok(CorpusFormat::Jsonl),
        "directory" | "dir" => Ok(CorpusFormat::Directory),
        other => Err(format!("unknown corpus format {other:?} (expected jsonl or directory)")),
    }
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    out: PathBuf,
    /// Embedding provider id; defaults to the config's active provider.
    #[arg(long)]
    provider: Option<String>,
    /// Build an IVF index instead of a flat one.
    #[arg(long)]
    ivf: bool,
    /// IVF list count; defaults to ceil(sqrt(chunks)).
    #[arg(long, requires = "ivf")]
    nlist: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    providers: ProviderArgs,
}

#[derive(Debug, Args)]
struct RagArgs {
    #[arg(long, default_value_t = RagParams::default().top_k)]
    k: usize,
    #[arg(long, default_value_t = RagParams::default().relevance_threshold, allow_negative_numbers = true)]
    threshold: f32,
    #[arg(long, default_value_t = DEFAULT_NPROBE)]
    nprobe: usize,
    #[arg(long, default_value_t = RagParams::default().max_context_chars)]
    max_context_chars: usize,
    /// Chat provider id; defaults to the config's active provider.
    #[arg(long)]
    llm: Option<String>,
}

impl RagArgs {
    fn params(&self) -> RagParams {
        RagParams {
            top_k: self.k,
            relevance_threshold: self.threshold,
            max_context_chars: self.max_context_chars,
            nprobe: self.nprobe,
        }
    }
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long = "q")]
    query: String,
    #[command(flatten)]
    rag: RagArgs,
    #[command(flatten)]
    providers: ProviderArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    questions: PathBuf,
    /// exact_match, citation_hit or bleu_threshold(t).
    #[arg(long, default_value = "bleu_threshold(0.5)")]
    criterion: String,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long, default_value_t = DEFAULT_RECALL_K)]
    recall_k: usize,
    /// Answer questions on a thread pool; metrics are unchanged.
    #[arg(long)]
    parallel: bool,
    /// Configuration label for the report rows.
    #[arg(long)]
    label: Option<String>,
    /// Also write the report JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the plain-text tables here.
    #[arg(long)]
    tables: Option<PathBuf>,
    /// Exit 4 unless Recall@k reaches this fraction.
    #[arg(long)]
    min_recall: Option<f64>,
    /// Exit 4 unless MRR reaches this value.
    #[arg(long)]
    min_mrr: Option<f64>,
    /// Exit 4 unless average accuracy reaches this percentage.
    #[arg(long)]
    min_accuracy: Option<f64>,
    #[command(flatten)]
    rag: RagArgs,
    #[command(flatten)]
    providers: ProviderArgs,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Count occurrences of this term; repeatable.
    #[arg(long = "key-term")]
    key_terms: Vec<String>,
}

#[derive(Debug, Args)]
struct SynthBankArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    per_topic: usize,
    #[arg(long)]
    provider: Option<String>,
    #[command(flatten)]
    providers: ProviderArgs,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's bind address.
    #[arg(long)]
    bind: Option<SocketAddr>,
}

fn print_json(value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(CliError::data)?;
    println!("{text}");
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn embedder_for(config: &ServiceConfig, provider_id: &str) -> Result<Arc<dyn Embedder>, CliError> {
    let provider = config
        .embedding_providers
        .iter()
        .find(|p| p.provider_id == provider_id)
        .ok_or_else(|| CliError::Usage(format!("no embedding provider {provider_id:?} is configured")))?;
    Ok(build_embedder(provider)?)
}

fn chat_model_for(config: &ServiceConfig, provider_id: Option<&str>) -> Result<Arc<dyn ChatModel>, CliError> {
    let id = provider_id.unwrap_or(&config.llm_provider);
    let provider = config
        .llm_providers
        .iter()
        .find(|p| p.provider_id == id)
        .ok_or_else(|| CliError::Usage(format!("no llm provider {id:?} is configured")))?;
    Ok(build_chat_model(provider)?)
}

fn build_kb(
    corpus: &CorpusArgs,
    config: &ServiceConfig,
    provider: Option<&str>,
    spec: &IndexSpec,
) -> Result<(usize, KnowledgeBase, Arc<dyn Embedder>), CliError> {
    let params = corpus.chunk_params()?;
    let embedder = embedder_for(config, provider.unwrap_or(&config.embedding_provider))?;
    let docs = corpus.load()?;
    let kb = KnowledgeBase::build(&docs, &params, embedder.as_ref(), spec)?;
    Ok((docs.len(), kb, embedder))
}

/// Loads an index and the embedder it was built with.
fn open_index(path: &Path, config: &ServiceConfig) -> Result<(KnowledgeBase, Arc<dyn Embedder>), CliError> {
    let kb = KnowledgeBase::load(path)?;
    let embedder = embedder_for(config, kb.index.provider_id())?;
    Ok((kb, embedder))
}

fn ingest(args: IngestArgs) -> Result<(), CliError> {
    let config = args.providers.load()?;
    let spec = IndexSpec {
        kind: if args.ivf { IndexKind::Ivf } else { IndexKind::Flat },
        nlist: args.nlist,
        seed: args.seed,
    };
    let (doc_count, kb, _) = build_kb(&args.corpus, &config, args.provider.as_deref(), &spec)?;
    kb.save(&args.out)?;
    eprintln!("indexed {doc_count} documents as {} chunks", kb.index.len());
    print_json(&json!({
        "doc_count": doc_count,
        "chunk_count": kb.index.len(),
        "index_kind": kb.index.kind().as_str(),
        "index_path": args.out,
    }))
}

fn query(args: QueryArgs) -> Result<(), CliError> {
    let config = args.providers.load()?;
    let (kb, embedder) = open_index(&args.index, &config)?;
    let llm = chat_model_for(&config, args.rag.llm.as_deref())?;
    let answer = answer_query(&args.query, &args.rag.params(), &kb, embedder.as_ref(), llm.as_ref())?;
    print_json(&answer)
}

fn eval(args: EvalArgs) -> Result<(), CliError> {
    let criterion: Criterion = args.criterion.parse()?;
    let config = args.providers.load()?;
    let bank = load_question_bank(&args.questions)?;
    let (kb, embedder) = open_index(&args.index, &config)?;
    let llm = chat_model_for(&config, args.rag.llm.as_deref())?;
    let pipeline = Pipeline {
        label: args.label.clone().unwrap_or_else(|| format!("{} (RAG)", llm.provider_id())),
        kb: &kb,
        embedder: embedder.as_ref(),
        llm: llm.as_ref(),
        params: args.rag.params(),
    };
    let options = BenchmarkOptions {
        criterion,
        repeats: args.repeats,
        recall_k: args.recall_k,
        parallel: args.parallel,
    };
    let report = run_benchmark(&bank, &pipeline, &options)?;
    let json = report.to_json();
    if let Some(path) = &args.out {
        write_file(path, &json)?;
    }
    if let Some(path) = &args.tables {
        write_file(path, &report.to_text())?;
    }
    println!("{json}");
    eprint!("{}", report.to_text());

    let row = &report.configurations[0];
    let average = &report.averages[0];
    let mut unmet = Vec::new();
    let mut check = |name: &str, got: Option<f64>, min: Option<f64>| {
        if let Some(min) = min {
            match got {
                Some(v) if v >= min => {}
                Some(v) => unmet.push(format!("{name} {v} is below {min}")),
                None => unmet.push(format!("{name} is undefined: no question has relevance judgments")),
            }
        }
    };
    check(&format!("Recall@{}", args.recall_k), row.recall_at_k, args.min_recall);
    check("MRR", row.mrr, args.min_mrr);
    check("accuracy", Some(average.accuracy_pct), args.min_accuracy);
    if unmet.is_empty() {
        Ok(())
    } else {
        Err(CliError::Threshold(unmet.join("; ")))
    }
}

fn stats(args: StatsArgs) -> Result<(), CliError> {
    let params = args.corpus.chunk_params()?;
    let docs = args.corpus.load()?;
    let chunks = chunk_documents(&docs, &params);
    print_json(&corpus_stats(&docs, &chunks, &args.key_terms))
}

fn synth_bank(args: SynthBankArgs) -> Result<(), CliError> {
    let config = args.providers.load()?;
    let (_, kb, embedder) = build_kb(&args.corpus, &config, args.provider.as_deref(), &IndexSpec::default())?;
    let bank = synthesize_bank(&kb, embedder.as_ref(), args.per_topic)?;
    save_question_bank(&bank, &args.out)?;
    eprintln!("wrote {} questions to {}", bank.len(), args.out.display());
    print_json(&json!({"question_count": bank.len(), "path": args.out}))
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    let mut config = match &args.config {
        Some(path) => ServiceConfig::load(path)?,
        None => ServiceConfig::default(),
    };
    if let Some(bind) = args.bind {
        config.bind = bind;
    }
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let runtime = tokio::runtime::Runtime::new().map_err(CliError::data)?;
    Ok(runtime.block_on(harvest_service::serve(config))?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest(args) => ingest(args),
        Command::Query(args) => query(args),
        Command::Eval(args) => eval(args),
        Command::Stats(args) => stats(args),
        Command::SynthBank(args) => synth_bank(args),
        Command::Serve(args) => serve(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
