//! An index plus the chunk text and metadata it points at.
//!
//! The vector index file stores only ids and vectors; chunk text lives in a
//! JSONL sidecar next to it (`<index>.chunks.jsonl`).

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{chunk_documents, Chunk, ChunkParams, Document, Topic};
use crate::embedding::{Embedder, EmbeddingError};
use crate::vectorstore::{
    build_flat, build_ivf, default_nlist, IndexEntry, IndexKind, VectorIndex, VectorStoreError,
};

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("corpus produced no chunks")]
    NoChunks,
    #[error("embedding failed: {0}")]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Index(#[from] VectorStoreError),
    #[error("chunk store I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("chunk store and index disagree: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub chunk_id: String,
    pub doc_id: String,
    pub doc_title: String,
    pub topic: Topic,
    pub section_path: Vec<String>,
    pub text: String,
}

/// Chunk metadata by id, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChunkStore {
    records: Vec<ChunkRecord>,
    by_id: HashMap<String, usize>,
}

impl ChunkStore {
    pub fn from_records(records: Vec<ChunkRecord>) -> Result<Self, KnowledgeError> {
        let mut by_id = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if by_id.insert(r.chunk_id.clone(), i).is_some() {
                return Err(KnowledgeError::Mismatch(format!("duplicate chunk id {:?}", r.chunk_id)));
            }
        }
        Ok(Self { records, by_id })
    }

    pub fn from_chunks(docs: &[Document], chunks: &[Chunk]) -> Result<Self, KnowledgeError> {
        let titles: HashMap<&str, &str> = docs.iter().map(|d| (d.id.as_str(), d.title.as_str())).collect();
        Self::from_records(
            chunks
                .iter()
                .map(|c| ChunkRecord {
                    chunk_id: c.id.clone(),
                    doc_id: c.doc_id.clone(),
                    doc_title: titles.get(c.doc_id.as_str()).copied().unwrap_or_default().to_string(),
                    topic: c.topic.clone(),
                    section_path: c.section_path.clone(),
                    text: c.text.clone(),
                })
                .collect(),
        )
    }

    pub fn get(&self, chunk_id: &str) -> Option<&ChunkRecord> {
        self.by_id.get(chunk_id).map(|&i| &self.records[i])
    }

    pub fn contains(&self, chunk_id: &str) -> bool {
        self.by_id.contains_key(chunk_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ChunkRecord> {
        self.records.iter()
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<(), KnowledgeError> {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("chunk record serializes"));
            out.push('\n');
        }
        fs::write(path, out).map_err(|source| KnowledgeError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_jsonl(path: &Path) -> Result<Self, KnowledgeError> {
        let content = fs::read_to_string(path).map_err(|source| KnowledgeError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut records = Vec::new();
        for (i, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(line).map_err(|e| KnowledgeError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Self::from_records(records)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexSpec {
    pub kind: IndexKind,
    /// Defaults to `ceil(sqrt(n))` when unset.
    pub nlist: Option<usize>,
    pub seed: u64,
}

impl Default for IndexSpec {
    fn default() -> Self {
        Self {
            kind: IndexKind::Flat,
            nlist: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    pub index: VectorIndex,
    pub chunks: ChunkStore,
}

pub fn sidecar_path(index_path: &Path) -> PathBuf {
    let mut name = index_path.as_os_str().to_owned();
    name.push(".chunks.jsonl");
    PathBuf::from(name)
}

impl KnowledgeBase {
    /// Chunks, embeds and indexes a corpus.
    pub fn build(
        docs: &[Document],
        params: &ChunkParams,
        embedder: &dyn Embedder,
        spec: &IndexSpec,
    ) -> Result<Self, KnowledgeError> {
        let chunks = chunk_documents(docs, params);
        if chunks.is_empty() {
            return Err(KnowledgeError::NoChunks);
        }
        let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
        let vectors = embedder.embed_batch(&texts)?;
        let entries: Vec<IndexEntry> = chunks
            .iter()
            .zip(vectors)
            .map(|(c, v)| IndexEntry::new(c.id.clone(), v))
            .collect();
        let index = match spec.kind {
            IndexKind::Flat => VectorIndex::Flat(build_flat(entries)?),
            IndexKind::Ivf => {
                let nlist = spec.nlist.unwrap_or_else(|| default_nlist(entries.len()));
                VectorIndex::Ivf(build_ivf(entries, nlist, spec.seed)?)
            }
        };
        Ok(Self {
            index,
            chunks: ChunkStore::from_chunks(docs, &chunks)?,
        })
    }

    pub fn save(&self, index_path: &Path) -> Result<(), KnowledgeError> {
        self.index.save(index_path)?;
        self.chunks.save_jsonl(&sidecar_path(index_path))
    }

    pub fn load(index_path: &Path) -> Result<Self, KnowledgeError> {
        let index = VectorIndex::load(index_path)?;
        let chunks = ChunkStore::load_jsonl(&sidecar_path(index_path))?;
        if let Some(missing) = index.ids().iter().find(|id| !chunks.contains(id)) {
            return Err(KnowledgeError::Mismatch(format!("index id {missing:?} has no chunk record")));
        }
        Ok(Self { index, chunks })
    }
}
