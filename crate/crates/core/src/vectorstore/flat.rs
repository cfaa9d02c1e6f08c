use super::{IndexEntry, SearchHit, VectorSet, VectorStoreError};
use crate::embedding::EmbeddingVector;

/// Exhaustive index: every query scores every entry.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatIndex {
    pub(crate) vectors: VectorSet,
}

/// Builds a flat index. Entries must be non-empty, share one dimension and
/// provider, and have unique chunk ids.
pub fn build_flat(entries: Vec<IndexEntry>) -> Result<FlatIndex, VectorStoreError> {
    Ok(FlatIndex {
        vectors: VectorSet::from_entries(entries)?,
    })
}

impl FlatIndex {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim
    }

    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<SearchHit>, VectorStoreError> {
        self.vectors.check_query(query, k)?;
        Ok(self.vectors.top_k(query.values(), 0..self.vectors.len(), k))
    }
}
