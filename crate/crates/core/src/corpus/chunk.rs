use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Chunk, Document, Heading};

pub const DEFAULT_TARGET_SIZE: usize = 1200;
pub const DEFAULT_OVERLAP: usize = 200;

/// Sliding-window parameters, both in characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawChunkParams")]
pub struct ChunkParams {
    target_size: usize,
    overlap: usize,
}

#[derive(Deserialize)]
struct RawChunkParams {
    target_size: usize,
    overlap: usize,
}

impl TryFrom<RawChunkParams> for ChunkParams {
    type Error = ChunkParamsError;

    fn try_from(raw: RawChunkParams) -> Result<Self, Self::Error> {
        ChunkParams::new(raw.target_size, raw.overlap)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChunkParamsError {
    #[error("chunk size must be positive")]
    ZeroTarget,
    #[error("overlap ({overlap}) must be smaller than the chunk size ({target_size})")]
    OverlapTooLarge { target_size: usize, overlap: usize },
}

impl ChunkParams {
    pub fn new(target_size: usize, overlap: usize) -> Result<Self, ChunkParamsError> {
        if target_size == 0 {
            return Err(ChunkParamsError::ZeroTarget);
        }
        if overlap >= target_size {
            return Err(ChunkParamsError::OverlapTooLarge {
                target_size,
                overlap,
            });
        }
        Ok(Self {
            target_size,
            overlap,
        })
    }

    pub fn target_size(&self) -> usize {
        self.target_size
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    pub fn stride(&self) -> usize {
        self.target_size - self.overlap
    }
}

impl Default for ChunkParams {
    fn default() -> Self {
        Self {
            target_size: DEFAULT_TARGET_SIZE,
            overlap: DEFAULT_OVERLAP,
        }
    }
}

/// Splits a document into fixed-size character windows.
///
/// Window starts advance by `target_size - overlap`; the last window is cut
/// at the end of the text. Each chunk's section path is the heading stack in
/// effect at its first character.
pub fn chunk_document(doc: &Document, params: &ChunkParams) -> Vec<Chunk> {
    // byte offset of every char, plus the end of the string
    let boundaries: Vec<usize> = doc
        .text
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(doc.text.len()))
        .collect();
    let len = boundaries.len() - 1;
    if len == 0 {
        return Vec::new();
    }

    let mut chunks = Vec::with_capacity(len.div_ceil(params.stride()));
    let mut sections = SectionTracker::new(&doc.headings);
    let mut start = 0;
    loop {
        let end = (start + params.target_size).min(len);
        let ordinal = chunks.len();
        chunks.push(Chunk {
            id: format!("{}#{}", doc.id, ordinal),
            doc_id: doc.id.clone(),
            ordinal,
            topic: doc.topic.clone(),
            section_path: sections.path_at(start),
            text: doc.text[boundaries[start]..boundaries[end]].to_string(),
            span: (start, end),
        });
        if end == len {
            break;
        }
        start += params.stride();
    }
    chunks
}

pub fn chunk_documents(docs: &[Document], params: &ChunkParams) -> Vec<Chunk> {
    docs.iter()
        .flat_map(|doc| chunk_document(doc, params))
        .collect()
}

/// Walks headings in offset order, keeping the stack of open sections.
struct SectionTracker<'a> {
    headings: &'a [Heading],
    next: usize,
    stack: Vec<&'a Heading>,
}

impl<'a> SectionTracker<'a> {
    fn new(headings: &'a [Heading]) -> Self {
        Self {
            headings,
            next: 0,
            stack: Vec::new(),
        }
    }

    /// Positions must be requested in non-decreasing order.
    fn path_at(&mut self, position: usize) -> Vec<String> {
        while let Some(heading) = self.headings.get(self.next) {
            if heading.offset > position {
                break;
            }
            while self.stack.last().is_some_and(|top| top.level >= heading.level) {
                self.stack.pop();
            }
            self.stack.push(heading);
            self.next += 1;
        }
        self.stack.iter().map(|h| h.text.clone()).collect()
    }
}
