//! Cosine-similarity vector indexes: exhaustive flat search and inverted-file
//! (IVF) approximate search, plus a checksummed binary file format.

mod flat;
mod ivf;
mod persist;

use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingVector;

pub use flat::{build_flat, FlatIndex};
pub use ivf::{build_ivf, default_nlist, IvfIndex, KMEANS_MAX_ITERATIONS, KMEANS_TOLERANCE};
pub use persist::{FORMAT_VERSION, MAGIC};

pub const DEFAULT_NPROBE: usize = 8;

#[derive(Debug, Error)]
pub enum VectorStoreError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("duplicate chunk id {0:?}")]
    DuplicateId(String),
    #[error("cannot build an index from zero entries")]
    Empty,
    #[error("entries come from different providers ({0:?} and {1:?})")]
    MixedProviders(String, String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("nprobe must be at least 1")]
    InvalidNprobe,
    #[error("nlist {nlist} out of range 1..={max}")]
    NlistOutOfRange { nlist: usize, max: usize },
    #[error("not an index file (bad magic)")]
    BadMagic,
    #[error("unsupported index format version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown index kind {0}")]
    UnknownKind(u8),
    #[error("index file is truncated")]
    Truncated,
    #[error("index checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("corrupt index file: {0}")]
    Corrupt(String),
    #[error("index I/O on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub chunk_id: String,
    pub vector: EmbeddingVector,
}

impl IndexEntry {
    pub fn new(chunk_id: impl Into<String>, vector: EmbeddingVector) -> Self {
        Self {
            chunk_id: chunk_id.into(),
            vector,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub chunk_id: String,
    pub score: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    Flat,
    Ivf,
}

impl IndexKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            IndexKind::Flat => "flat",
            IndexKind::Ivf => "ivf",
        }
    }
}

/// Dot product accumulated in f64 in component order.
///
/// All indexed vectors are unit norm, so this is their cosine similarity.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum::<f64>() as f32
}

pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f32, VectorStoreError> {
    if u.dim() != v.dim() {
        return Err(VectorStoreError::DimensionMismatch {
            expected: u.dim(),
            actual: v.dim(),
        });
    }
    Ok(dot(u.values(), v.values()))
}

/// Contiguous row-major storage of unit vectors with their ids.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct VectorSet {
    pub dim: usize,
    pub provider_id: String,
    pub ids: Vec<String>,
    pub data: Vec<f32>,
}

impl VectorSet {
    pub fn from_entries(entries: Vec<IndexEntry>) -> Result<Self, VectorStoreError> {
        let first = entries.first().ok_or(VectorStoreError::Empty)?;
        let dim = first.vector.dim();
        let provider_id = first.vector.provider_id().to_string();
        let mut seen = HashSet::with_capacity(entries.len());
        let mut ids = Vec::with_capacity(entries.len());
        let mut data = Vec::with_capacity(entries.len() * dim);
        for entry in entries {
            if entry.vector.dim() != dim {
                return Err(VectorStoreError::DimensionMismatch {
                    expected: dim,
                    actual: entry.vector.dim(),
                });
            }
            if entry.vector.provider_id() != provider_id {
                return Err(VectorStoreError::MixedProviders(
                    provider_id,
                    entry.vector.provider_id().to_string(),
                ));
            }
            if !seen.insert(entry.chunk_id.clone()) {
                return Err(VectorStoreError::DuplicateId(entry.chunk_id));
            }
            data.extend_from_slice(entry.vector.values());
            ids.push(entry.chunk_id);
        }
        Ok(Self {
            dim,
            provider_id,
            ids,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn check_query(&self, query: &EmbeddingVector, k: usize) -> Result<(), VectorStoreError> {
        if k < 1 {
            return Err(VectorStoreError::InvalidK);
        }
        if query.dim() != self.dim {
            return Err(VectorStoreError::DimensionMismatch {
                expected: self.dim,
                actual: query.dim(),
            });
        }
        Ok(())
    }

    /// Scores the given rows and keeps the best `k` under the hit ordering.
    pub fn top_k(
        &self,
        query: &[f32],
        rows: impl Iterator<Item = usize>,
        k: usize,
    ) -> Vec<SearchHit> {
        let mut scored: Vec<(f32, usize)> = rows.map(|i| (dot(query, self.row(i)), i)).collect();
        let order = |a: &(f32, usize), b: &(f32, usize)| -> Ordering {
            b.0.total_cmp(&a.0).then_with(|| self.ids[a.1].cmp(&self.ids[b.1]))
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);
        scored
            .into_iter()
            .map(|(score, i)| SearchHit {
                chunk_id: self.ids[i].clone(),
                score,
            })
            .collect()
    }
}

/// Either index kind behind one search interface.
#[derive(Debug, Clone, PartialEq)]
pub enum VectorIndex {
    Flat(FlatIndex),
    Ivf(IvfIndex),
}

impl VectorIndex {
    pub fn kind(&self) -> IndexKind {
        match self {
            VectorIndex::Flat(_) => IndexKind::Flat,
            VectorIndex::Ivf(_) => IndexKind::Ivf,
        }
    }

    fn vectors(&self) -> &VectorSet {
        match self {
            VectorIndex::Flat(f) => &f.vectors,
            VectorIndex::Ivf(i) => &i.vectors,
        }
    }

    pub fn len(&self) -> usize {
        self.vectors().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors().dim
    }

    pub fn provider_id(&self) -> &str {
        &self.vectors().provider_id
    }

    pub fn ids(&self) -> &[String] {
        &self.vectors().ids
    }

    pub fn contains(&self, chunk_id: &str) -> bool {
        self.ids().iter().any(|id| id == chunk_id)
    }

    /// Top-`k` hits by cosine, ties broken by ascending chunk id.
    ///
    /// `nprobe` is ignored by flat indexes and clamped to `nlist` for IVF.
    pub fn search(
        &self,
        query: &EmbeddingVector,
        k: usize,
        nprobe: usize,
    ) -> Result<Vec<SearchHit>, VectorStoreError> {
        match self {
            VectorIndex::Flat(f) => f.search(query, k),
            VectorIndex::Ivf(i) => i.search(query, k, nprobe),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        persist::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, VectorStoreError> {
        persist::decode(bytes)
    }

    /// Writes to a sibling temp file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), VectorStoreError> {
        let io = |source| VectorStoreError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        std::fs::write(&tmp, self.to_bytes()).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, VectorStoreError> {
        let bytes = std::fs::read(path).map_err(|source| VectorStoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

impl From<FlatIndex> for VectorIndex {
    fn from(index: FlatIndex) -> Self {
        VectorIndex::Flat(index)
    }
}

impl From<IvfIndex> for VectorIndex {
    fn from(index: IvfIndex) -> Self {
        VectorIndex::Ivf(index)
    }
}
