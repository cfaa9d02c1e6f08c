//! Retrieval-augmented question answering over a topic-organized document corpus.
//!
//! The pipeline is: [`corpus`] loads and chunks documents, [`embedding`] turns
//! chunks into unit vectors, [`vectorstore`] indexes them for cosine search,
//! [`rag`] retrieves context and prompts an [`llm`] provider, and [`eval`]
//! scores the whole thing with MRR, Recall@k, BLEU, accuracy and latency.

pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod knowledge;
pub mod llm;
mod provider;
pub mod rag;
pub mod text;
pub mod vectorstore;

pub use corpus::{Chunk, ChunkParams, CorpusStats, Document, Topic};
pub use embedding::{Embedder, EmbeddingProviderConfig, EmbeddingVector};
pub use knowledge::{ChunkRecord, ChunkStore, KnowledgeBase};
pub use llm::{ChatModel, Completion, LlmProviderConfig};
pub use provider::RetryPolicy;
pub use rag::{Answer, Prompt, RagParams};
pub use vectorstore::{SearchHit, VectorIndex};
