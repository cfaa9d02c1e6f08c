use std::path::Path;
use std::sync::{Arc, RwLock};

use harvest_core::corpus::{chunk_documents, corpus_stats, load_corpus, CorpusError, CorpusFormat};
use harvest_core::embedding::{build_embedder, EmbeddingError};
use harvest_core::eval::MetricsReport;
use harvest_core::knowledge::KnowledgeError;
use harvest_core::llm::{build_chat_model, LlmError};
use harvest_core::{ChatModel, CorpusStats, Document, Embedder, KnowledgeBase};
use thiserror::Error;
use tokio::sync::Mutex;

use crate::config::ServiceConfig;

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("loading index: {0}")]
    Index(#[from] KnowledgeError),
    #[error("loading corpus: {0}")]
    Corpus(#[from] CorpusError),
}

/// An index with the statistics of the corpus it was built from.
#[derive(Debug)]
pub struct Loaded {
    pub kb: KnowledgeBase,
    /// Absent when an index file was loaded without its corpus.
    pub stats: Option<CorpusStats>,
}

/// Shared by every request. The index is replaced wholesale on ingest, so
/// readers clone the `Arc` and never hold the lock across a query.
pub struct AppState {
    pub config: ServiceConfig,
    pub embedder: Arc<dyn Embedder>,
    pub llm: Arc<dyn ChatModel>,
    loaded: RwLock<Option<Arc<Loaded>>>,
    report: RwLock<Option<Arc<MetricsReport>>>,
    pub(crate) ingest_lock: Arc<Mutex<()>>,
}

impl AppState {
    /// Builds the provider clients and loads `index_path` if it exists.
    pub fn new(config: ServiceConfig) -> Result<Self, StartupError> {
        let embedder = build_embedder(config.embedding_provider_config().expect("validated config"))?;
        let llm = build_chat_model(config.llm_provider_config().expect("validated config"))?;
        let mut loaded = None;
        if let Some(index_path) = config.index_path.as_deref().filter(|p| p.exists()) {
            let kb = KnowledgeBase::load(index_path)?;
            let stats = match config.corpus_path.as_deref().filter(|p| p.exists()) {
                Some(corpus) => {
                    let docs = load_corpus(corpus, CorpusFormat::detect(corpus))?;
                    Some(stats_for(&config, &docs))
                }
                None => None,
            };
            tracing::info!(path = %index_path.display(), chunks = kb.index.len(), "loaded index");
            loaded = Some(Arc::new(Loaded { kb, stats }));
        }
        Ok(Self {
            config,
            embedder,
            llm,
            loaded: RwLock::new(loaded),
            report: RwLock::new(None),
            ingest_lock: Arc::new(Mutex::new(())),
        })
    }

    pub fn loaded(&self) -> Option<Arc<Loaded>> {
        self.loaded.read().expect("index lock poisoned").clone()
    }

    pub fn swap_loaded(&self, next: Loaded) {
        *self.loaded.write().expect("index lock poisoned") = Some(Arc::new(next));
    }

    pub fn report(&self) -> Option<Arc<MetricsReport>> {
        self.report.read().expect("report lock poisoned").clone()
    }

    pub fn set_report(&self, report: MetricsReport) {
        *self.report.write().expect("report lock poisoned") = Some(Arc::new(report));
    }
}

pub(crate) fn stats_for(config: &ServiceConfig, docs: &[Document]) -> CorpusStats {
    let chunks = chunk_documents(docs, &config.chunking);
    corpus_stats(docs, &chunks, &config.key_terms)
}

pub(crate) fn load_docs(path: &Path, format: Option<CorpusFormat>) -> Result<Vec<Document>, CorpusError> {
    load_corpus(path, format.unwrap_or_else(|| CorpusFormat::detect(path)))
}
