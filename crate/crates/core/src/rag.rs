//! Query answering: embed, retrieve, decide relevance, prompt, complete.
//!
//! When no retrieved chunk clears the relevance threshold the prompt carries
//! no context and a system text telling the model to answer from general
//! knowledge; the answer is then flagged `used_fallback` with no citations.

use std::cmp::Ordering;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{Embedder, EmbeddingError};
use crate::knowledge::{ChunkStore, KnowledgeBase};
use crate::llm::{ChatModel, LlmError};
use crate::vectorstore::{SearchHit, VectorIndex, VectorStoreError, DEFAULT_NPROBE};

pub const SYSTEM_TEXT: &str =
    "Answer using only the provided context. Cite sources. If the context is insufficient, say so.";
pub const FALLBACK_SYSTEM_TEXT: &str = "No reference material was retrieved. Answer from your general knowledge and state that no sources were found.";
pub const MAX_QUERY_CHARS: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RagParams {
    pub top_k: usize,
    /// Minimum cosine score for a hit to count as relevant.
    pub relevance_threshold: f32,
    pub max_context_chars: usize,
    pub nprobe: usize,
}

impl Default for RagParams {
    fn default() -> Self {
        Self {
            top_k: 5,
            relevance_threshold: 0.25,
            max_context_chars: 6000,
            nprobe: DEFAULT_NPROBE,
        }
    }
}

impl RagParams {
    /// Accepts thresholds above 1 (they simply match nothing); rejects
    /// anything below -1, zero sizes and NaN.
    pub fn validate(&self) -> Result<(), RagError> {
        let bad = |m: String| Err(RagError::InvalidParams(m));
        if self.top_k < 1 {
            return bad("top_k must be at least 1".into());
        }
        if self.relevance_threshold.is_nan() || self.relevance_threshold < -1.0 {
            return bad(format!("relevance_threshold {} is below -1", self.relevance_threshold));
        }
        if self.max_context_chars == 0 {
            return bad("max_context_chars must be positive".into());
        }
        if self.nprobe == 0 {
            return bad("nprobe must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBlock {
    pub chunk_id: String,
    pub doc_title: String,
    pub section_path: Vec<String>,
    pub score: f32,
    pub text: String,
}

impl ContextBlock {
    /// `"<doc_title> / <a/b/c>"`, or just the title when there is no section.
    pub fn source_label(&self) -> String {
        if self.section_path.is_empty() {
            self.doc_title.clone()
        } else {
            format!("{} / {}", self.doc_title, self.section_path.join("/"))
        }
    }

    pub fn render(&self) -> String {
        format!("[Source: {}]\n{}", self.source_label(), self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub system_text: String,
    pub context_blocks: Vec<ContextBlock>,
    pub query: String,
}

impl Prompt {
    /// Rendered context blocks followed by the question.
    pub fn user_message(&self) -> String {
        let mut out = String::new();
        for block in &self.context_blocks {
            out.push_str(&block.render());
            out.push_str("\n\n");
        }
        out.push_str("Question: ");
        out.push_str(&self.query);
        out
    }

    pub fn is_fallback(&self) -> bool {
        self.context_blocks.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Citation {
    pub chunk_id: String,
    pub doc_title: String,
    pub section_path: Vec<String>,
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub citations: Vec<Citation>,
    pub used_fallback: bool,
    pub provider_id: String,
    pub latency_ms: u64,
    pub retrieved_k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Embed,
    Search,
    Complete,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Embed => "embed",
            Stage::Search => "search",
            Stage::Complete => "complete",
        }
    }
}

#[derive(Debug, Error)]
pub enum RagError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("query is {len} characters, limit is {max}")]
    QueryTooLong { len: usize, max: usize },
    #[error("query embedded by {query:?} but index was built with {index:?}")]
    ProviderMismatch { index: String, query: String },
    #[error("hit references unknown chunk {0:?}")]
    UnknownChunk(String),
    #[error("invalid retrieval parameters: {0}")]
    InvalidParams(String),
    #[error("embed: {0}")]
    Embed(#[source] EmbeddingError),
    #[error("search: {0}")]
    Search(#[source] VectorStoreError),
    #[error("complete: {0}")]
    Complete(#[source] LlmError),
}

impl RagError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            RagError::Embed(_) => Some(Stage::Embed),
            RagError::Search(_) | RagError::ProviderMismatch { .. } => Some(Stage::Search),
            RagError::Complete(_) => Some(Stage::Complete),
            _ => None,
        }
    }

    /// Failures of an external embedding or chat provider.
    pub fn is_provider_failure(&self) -> bool {
        matches!(
            self,
            RagError::Embed(EmbeddingError::Provider { .. } | EmbeddingError::DimensionMismatch { .. })
                | RagError::Complete(LlmError::Provider { .. } | LlmError::EmptyResponse { .. })
        )
    }
}

fn hit_order(a: &SearchHit, b: &SearchHit) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.chunk_id.cmp(&b.chunk_id))
}

/// Embeds the query and returns the top-k hits scoring at least the threshold.
pub fn retrieve(
    query: &str,
    params: &RagParams,
    index: &VectorIndex,
    embedder: &dyn Embedder,
) -> Result<Vec<SearchHit>, RagError> {
    if query.trim().is_empty() {
        return Err(RagError::EmptyQuery);
    }
    params.validate()?;
    if embedder.provider_id() != index.provider_id() {
        return Err(RagError::ProviderMismatch {
            index: index.provider_id().to_string(),
            query: embedder.provider_id().to_string(),
        });
    }
    let vector = embedder.embed(query).map_err(RagError::Embed)?;
    if vector.provider_id() != index.provider_id() {
        return Err(RagError::ProviderMismatch {
            index: index.provider_id().to_string(),
            query: vector.provider_id().to_string(),
        });
    }
    let mut hits = index
        .search(&vector, params.top_k, params.nprobe)
        .map_err(RagError::Search)?;
    hits.retain(|h| h.score >= params.relevance_threshold);
    Ok(hits)
}

/// Packs whole chunks, best first, until the next would exceed
/// `max_context_chars`. No blocks selects the fallback system text.
pub fn build_prompt(
    query: &str,
    hits: &[SearchHit],
    chunks: &ChunkStore,
    params: &RagParams,
) -> Result<Prompt, RagError> {
    if query.trim().is_empty() {
        return Err(RagError::EmptyQuery);
    }
    let mut ordered: Vec<&SearchHit> = hits.iter().collect();
    ordered.sort_by(|a, b| hit_order(a, b));

    let mut records = Vec::with_capacity(ordered.len());
    for hit in ordered {
        let record = chunks
            .get(&hit.chunk_id)
            .ok_or_else(|| RagError::UnknownChunk(hit.chunk_id.clone()))?;
        records.push((hit, record));
    }

    let mut used = 0usize;
    let mut context_blocks = Vec::new();
    for (hit, record) in records {
        let len = record.text.chars().count();
        if used + len > params.max_context_chars {
            break;
        }
        used += len;
        context_blocks.push(ContextBlock {
            chunk_id: record.chunk_id.clone(),
            doc_title: record.doc_title.clone(),
            section_path: record.section_path.clone(),
            score: hit.score,
            text: record.text.clone(),
        });
    }
    let system_text = if context_blocks.is_empty() {
        FALLBACK_SYSTEM_TEXT
    } else {
        SYSTEM_TEXT
    };
    Ok(Prompt {
        system_text: system_text.to_string(),
        context_blocks,
        query: query.to_string(),
    })
}

pub fn answer_query(
    query: &str,
    params: &RagParams,
    kb: &KnowledgeBase,
    embedder: &dyn Embedder,
    llm: &dyn ChatModel,
) -> Result<Answer, RagError> {
    if query.trim().is_empty() {
        return Err(RagError::EmptyQuery);
    }
    let len = query.chars().count();
    if len > MAX_QUERY_CHARS {
        return Err(RagError::QueryTooLong {
            len,
            max: MAX_QUERY_CHARS,
        });
    }
    let started = Instant::now();
    let hits = retrieve(query, params, &kb.index, embedder)?;
    let prompt = build_prompt(query, &hits, &kb.chunks, params)?;
    let completion = llm.complete(&prompt).map_err(RagError::Complete)?;
    let citations: Vec<Citation> = prompt
        .context_blocks
        .iter()
        .map(|b| Citation {
            chunk_id: b.chunk_id.clone(),
            doc_title: b.doc_title.clone(),
            section_path: b.section_path.clone(),
            score: b.score,
        })
        .collect();
    Ok(Answer {
        text: completion.text,
        used_fallback: citations.is_empty(),
        citations,
        provider_id: completion.provider_id,
        latency_ms: started.elapsed().as_millis() as u64,
        retrieved_k: hits.len(),
    })
}
