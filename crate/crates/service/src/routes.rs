use std::net::{TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::Json;
use harvest_core::corpus::{CorpusError, CorpusFormat};
use harvest_core::embedding::{build_embedder, EmbeddingError};
use harvest_core::eval::{load_question_bank, run_benchmark, BenchmarkOptions, Criterion, EvalError, Pipeline};
use harvest_core::knowledge::KnowledgeError;
use harvest_core::rag::{answer_query, Citation, Stage};
use harvest_core::{CorpusStats, Document, KnowledgeBase, RagParams};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::state::{load_docs, stats_for, AppState, Loaded};

type Shared = State<Arc<AppState>>;
type ApiResult<T> = Result<Json<T>, ApiError>;

const PROBE_TIMEOUT: Duration = Duration::from_millis(500);

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

#[derive(Debug, Deserialize)]
pub struct ChatRequest {
    pub query: String,
    pub top_k: Option<usize>,
    pub threshold: Option<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub answer: String,
    pub citations: Vec<Citation>,
    pub used_fallback: bool,
    pub latency_ms: u64,
    pub provider_id: String,
    pub retrieved_k: usize,
}

pub async fn chat(State(state): Shared, body: Result<Json<ChatRequest>, JsonRejection>) -> ApiResult<ChatResponse> {
    let Json(request) = body?;
    if request.query.trim().is_empty() {
        return Err(ApiError::bad_request("empty_query", "query is empty"));
    }
    let loaded = state.loaded().ok_or_else(ApiError::no_index)?;
    let params = RagParams {
        top_k: request.top_k.unwrap_or(state.config.rag.top_k),
        relevance_threshold: request.threshold.unwrap_or(state.config.rag.relevance_threshold),
        ..state.config.rag
    };
    let answer = blocking(move || {
        answer_query(&request.query, &params, &loaded.kb, state.embedder.as_ref(), state.llm.as_ref())
    })
    .await??;
    Ok(Json(ChatResponse {
        answer: answer.text,
        citations: answer.citations,
        used_fallback: answer.used_fallback,
        latency_ms: answer.latency_ms,
        provider_id: answer.provider_id,
        retrieved_k: answer.retrieved_k,
    }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestRequest {
    pub corpus_path: Option<PathBuf>,
    pub format: Option<CorpusFormat>,
    pub documents: Option<Vec<Document>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestResponse {
    pub doc_count: usize,
    pub chunk_count: usize,
    pub index_kind: String,
}

fn corpus_error(e: CorpusError) -> ApiError {
    ApiError::bad_request("malformed_corpus", e.to_string())
}

fn embedding_error(e: EmbeddingError) -> ApiError {
    let remote = matches!(e, EmbeddingError::Provider { .. } | EmbeddingError::DimensionMismatch { .. });
    let mut error = if remote {
        ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "provider_failure", e.to_string())
    } else {
        ApiError::bad_request("malformed_corpus", e.to_string())
    };
    error.body.stage = Some(Stage::Embed);
    error
}

fn knowledge_error(e: KnowledgeError) -> ApiError {
    match e {
        KnowledgeError::NoChunks => ApiError::bad_request("malformed_corpus", e.to_string()),
        KnowledgeError::Embedding(e) => embedding_error(e),
        other => ApiError::internal(other.to_string()),
    }
}

/// Rebuilds the index from a corpus and swaps it in. Chat keeps using the
/// previous index until the swap; a second ingest meanwhile gets 409.
pub async fn ingest(
    State(state): Shared,
    body: Result<Json<IngestRequest>, JsonRejection>,
) -> ApiResult<IngestResponse> {
    let Json(request) = body?;
    let guard = state.ingest_lock.clone().try_lock_owned().map_err(|_| {
        ApiError::new(StatusCode::CONFLICT, "ingest_in_progress", "another ingest is running")
    })?;
    // The build runs to completion and swaps even if the request times out.
    blocking(move || {
        let _guard = guard;
        let docs = match (request.documents, request.corpus_path) {
            (Some(_), Some(_)) => {
                return Err(ApiError::bad_request(
                    "invalid_request",
                    "give either documents or corpus_path, not both",
                ))
            }
            (Some(docs), None) => {
                let mut seen = std::collections::HashSet::new();
                for doc in &docs {
                    doc.validate().map_err(corpus_error)?;
                    if !seen.insert(doc.id.as_str()) {
                        return Err(corpus_error(CorpusError::DuplicateId(doc.id.clone())));
                    }
                }
                docs
            }
            (None, path) => {
                let path = path.or_else(|| state.config.corpus_path.clone()).ok_or_else(|| {
                    ApiError::bad_request("no_corpus", "no corpus_path in the request or the config")
                })?;
                load_docs(&path, request.format).map_err(corpus_error)?
            }
        };
        // a private client keeps ingest traffic out of the chat path's in-flight slots
        let embedder = build_embedder(state.config.embedding_provider_config().expect("validated config"))
            .map_err(embedding_error)?;
        let kb = KnowledgeBase::build(&docs, &state.config.chunking, embedder.as_ref(), &state.config.index)
            .map_err(knowledge_error)?;
        if let Some(path) = &state.config.index_path {
            kb.save(path).map_err(|e| ApiError::internal(format!("saving index: {e}")))?;
        }
        let response = IngestResponse {
            doc_count: docs.len(),
            chunk_count: kb.index.len(),
            index_kind: kb.index.kind().as_str().to_string(),
        };
        let stats = stats_for(&state.config, &docs);
        state.swap_loaded(Loaded { kb, stats: Some(stats) });
        tracing::info!(docs = response.doc_count, chunks = response.chunk_count, "ingest complete");
        Ok(Json(response))
    })
    .await?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderHealth {
    pub id: String,
    pub kind: String,
    pub reachable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub index_loaded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_kind: Option<String>,
    pub chunk_count: usize,
    pub providers: Vec<ProviderHealth>,
}

/// Local and mock endpoints are always reachable; HTTP ones get a TCP connect.
fn reachable(endpoint: &str) -> bool {
    let Some((scheme, rest)) = endpoint.split_once("://") else {
        return true;
    };
    let authority = rest.split(['/', '?', '#']).next().unwrap_or_default();
    let authority = authority.rsplit('@').next().unwrap_or_default();
    let has_port = authority.rsplit_once(':').is_some_and(|(_, p)| p.parse::<u16>().is_ok())
        && !authority.ends_with(']');
    let target = if has_port {
        authority.to_string()
    } else {
        let port = if scheme.eq_ignore_ascii_case("https") { 443 } else { 80 };
        format!("{authority}:{port}")
    };
    target
        .to_socket_addrs()
        .map(|mut addrs| addrs.any(|a| TcpStream::connect_timeout(&a, PROBE_TIMEOUT).is_ok()))
        .unwrap_or(false)
}

pub async fn health(State(state): Shared) -> ApiResult<HealthResponse> {
    let loaded = state.loaded();
    let embed = state.config.embedding_provider_config().expect("validated config");
    let llm = state.config.llm_provider_config().expect("validated config");
    let targets = [
        (embed.provider_id.clone(), "embedding", embed.endpoint.clone()),
        (llm.provider_id.clone(), "llm", llm.endpoint.clone()),
    ];
    let providers = blocking(move || {
        targets
            .into_iter()
            .map(|(id, kind, endpoint)| ProviderHealth {
                id,
                kind: kind.into(),
                reachable: reachable(&endpoint),
            })
            .collect()
    })
    .await?;
    Ok(Json(HealthResponse {
        status: "ok".into(),
        index_loaded: loaded.is_some(),
        index_kind: loaded.as_ref().map(|l| l.kb.index.kind().as_str().to_string()),
        chunk_count: loaded.as_ref().map_or(0, |l| l.kb.index.len()),
        providers,
    }))
}

pub async fn corpus_stats(State(state): Shared) -> ApiResult<CorpusStats> {
    let loaded = state.loaded().ok_or_else(ApiError::no_index)?;
    loaded.stats.clone().map(Json).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "stats_unavailable",
            "the index was loaded without its corpus; ingest to compute statistics",
        )
    })
}

pub async fn eval_report(State(state): Shared) -> Result<Json<serde_json::Value>, ApiError> {
    let report = state
        .report()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_report", "no benchmark has run yet"))?;
    serde_json::to_value(report.as_ref()).map(Json).map_err(|e| ApiError::internal(e.to_string()))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRequest {
    pub questions_path: Option<PathBuf>,
    pub criterion: Option<Criterion>,
    pub repeats: Option<usize>,
    pub recall_k: Option<usize>,
    pub label: Option<String>,
}

fn eval_error(e: EvalError) -> ApiError {
    match e {
        EvalError::Pipeline { source, question } => {
            let mut error = ApiError::from(source);
            error.body.message = format!("question {question}: {}", error.body.message);
            error
        }
        EvalError::Io { .. } | EvalError::Malformed { .. } => ApiError::bad_request("malformed_questions", e.to_string()),
        other => ApiError::bad_request("invalid_benchmark", other.to_string()),
    }
}

/// Runs the benchmark against the loaded index and keeps the report for
/// `/v1/eval/report`.
pub async fn eval_run(State(state): Shared, body: Result<Json<EvalRequest>, JsonRejection>) -> Result<Json<serde_json::Value>, ApiError> {
    let Json(request) = body?;
    let loaded = state.loaded().ok_or_else(ApiError::no_index)?;
    let path = request
        .questions_path
        .or_else(|| state.config.questions_path.clone())
        .ok_or_else(|| ApiError::bad_request("no_questions", "no questions_path in the request or the config"))?;
    let defaults = BenchmarkOptions::default();
    let options = BenchmarkOptions {
        criterion: request.criterion.unwrap_or(defaults.criterion),
        repeats: request.repeats.unwrap_or(defaults.repeats),
        recall_k: request.recall_k.unwrap_or(defaults.recall_k),
        parallel: false,
    };
    let label = request
        .label
        .unwrap_or_else(|| format!("{} (RAG)", state.llm.provider_id()));
    let worker = state.clone();
    let report = blocking(move || {
        let bank = load_question_bank(&path).map_err(eval_error)?;
        let pipeline = Pipeline {
            label,
            kb: &loaded.kb,
            embedder: worker.embedder.as_ref(),
            llm: worker.llm.as_ref(),
            params: worker.config.rag,
        };
        run_benchmark(&bank, &pipeline, &options).map_err(eval_error)
    })
    .await??;
    let json = serde_json::to_value(&report).map_err(|e| ApiError::internal(e.to_string()))?;
    state.set_report(report);
    Ok(Json(json))
}

pub async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}
