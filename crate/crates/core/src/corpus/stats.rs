use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Chunk, Document};
use crate::text::word_tokens;

pub const WORDS_PER_PAGE: usize = 300;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub doc_count: usize,
    pub chunk_count: usize,
    pub word_count: usize,
    pub page_count_estimate: usize,
    pub key_term_frequency: BTreeMap<String, usize>,
}

/// Counts documents, chunks, whitespace-separated words and key terms.
///
/// Key terms match case-insensitively on whole word tokens; a multi-word
/// term matches a consecutive run of tokens. Counts come from document
/// text, so overlapping chunks do not inflate them.
pub fn corpus_stats(docs: &[Document], chunks: &[Chunk], key_terms: &[String]) -> CorpusStats {
    let word_count: usize = docs.iter().map(|d| d.text.split_whitespace().count()).sum();

    let patterns: Vec<(&String, Vec<String>)> = key_terms
        .iter()
        .map(|term| (term, word_tokens(term)))
        .collect();
    let mut key_term_frequency: BTreeMap<String, usize> =
        key_terms.iter().map(|t| (t.clone(), 0)).collect();
    for doc in docs {
        let tokens = word_tokens(&doc.text);
        for (term, pattern) in &patterns {
            if pattern.is_empty() || pattern.len() > tokens.len() {
                continue;
            }
            let hits = tokens
                .windows(pattern.len())
                .filter(|w| *w == pattern.as_slice())
                .count();
            *key_term_frequency.entry((*term).clone()).or_default() += hits;
        }
    }

    CorpusStats {
        doc_count: docs.len(),
        chunk_count: chunks.len(),
        word_count,
        page_count_estimate: word_count.div_ceil(WORDS_PER_PAGE),
        key_term_frequency,
    }
}
