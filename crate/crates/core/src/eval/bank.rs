use std::collections::BTreeMap;

use super::{EvalError, EvalQuestion};
use crate::corpus::Topic;
use crate::embedding::Embedder;
use crate::knowledge::{ChunkRecord, KnowledgeBase};
use crate::rag::RagError;
use crate::text::{first_sentence, word_tokens};

const MIN_QUESTION_WORDS: usize = 6;

/// Terminated sentences of one line; an unterminated tail is dropped.
fn line_sentences(line: &str) -> Vec<&str> {
    let mut sentences = Vec::new();
    let mut start = None;
    let mut chars = line.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if start.is_none() && !c.is_whitespace() {
            start = Some(i);
        }
        let boundary = chars.peek().is_none_or(|&(_, n)| n.is_whitespace());
        if matches!(c, '.' | '!' | '?') && boundary {
            if let Some(s) = start.take() {
                sentences.push(&line[s..i + c.len_utf8()]);
            }
        }
    }
    sentences
}

/// Sentences of a chunk, line by line, skipping markdown heading lines.
fn whole_sentences(text: &str) -> Vec<&str> {
    text.lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(line_sentences)
        .collect()
}

/// True when an exhaustive search for `question` puts `chunk_id` strictly first.
fn retrieves_first(kb: &KnowledgeBase, embedder: &dyn Embedder, question: &str, chunk_id: &str) -> Result<bool, RagError> {
    let vector = embedder.embed(question).map_err(RagError::Embed)?;
    let hits = kb.index.search(&vector, 2, usize::MAX).map_err(RagError::Search)?;
    Ok(hits.first().is_some_and(|h| h.chunk_id == chunk_id)
        && hits.get(1).is_none_or(|second| second.score < hits[0].score))
}

/// Builds up to `per_topic` questions per topic whose answers are known by
/// construction.
///
/// Each question is a sentence found verbatim in exactly one chunk; that
/// chunk is the sole relevant id and its first sentence the reference.
/// Candidates that `embedder` would not retrieve first from the index are
/// skipped, so an extractive pipeline over the same index answers every
/// question exactly.
pub fn synthesize_bank(
    kb: &KnowledgeBase,
    embedder: &dyn Embedder,
    per_topic: usize,
) -> Result<Vec<EvalQuestion>, EvalError> {
    let store = &kb.chunks;
    let mut by_topic: BTreeMap<&Topic, Vec<&ChunkRecord>> = BTreeMap::new();
    for record in store.iter() {
        by_topic.entry(&record.topic).or_default().push(record);
    }
    let mut bank = Vec::new();
    for (topic, records) in by_topic {
        let candidates: Vec<(&ChunkRecord, Vec<&str>)> = records
            .iter()
            .map(|r| {
                let unique: Vec<&str> = whole_sentences(&r.text)
                    .into_iter()
                    .skip(1)
                    .filter(|s| word_tokens(s).len() >= MIN_QUESTION_WORDS)
                    .filter(|s| store.iter().filter(|o| o.text.contains(*s)).take(2).count() == 1)
                    .collect();
                (*r, unique)
            })
            .filter(|(_, s)| !s.is_empty())
            .collect();

        let mut made = 0;
        let deepest = candidates.iter().map(|(_, s)| s.len()).max().unwrap_or(0);
        'fill: for round in 0..deepest {
            for (record, sentences) in &candidates {
                if made == per_topic {
                    break 'fill;
                }
                let Some(sentence) = sentences.get(round) else { continue };
                let failed = |source| EvalError::Pipeline {
                    question: sentence.to_string(),
                    source,
                };
                if !retrieves_first(kb, embedder, sentence, &record.chunk_id).map_err(failed)? {
                    continue;
                }
                made += 1;
                bank.push(EvalQuestion {
                    id: format!("{}-{made:02}", topic.slug()),
                    topic: topic.clone(),
                    question: sentence.to_string(),
                    relevant_chunk_ids: [record.chunk_id.clone()].into(),
                    reference_answers: vec![first_sentence(&record.text).to_string()],
                });
            }
        }
    }
    Ok(bank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashedTrigramEmbedder;
    use crate::knowledge::ChunkStore;
    use crate::vectorstore::{build_flat, IndexEntry};

    fn kb(records: Vec<ChunkRecord>, embedder: &dyn Embedder) -> KnowledgeBase {
        let entries = records
            .iter()
            .map(|r| IndexEntry::new(r.chunk_id.clone(), embedder.embed(&r.text).unwrap()))
            .collect();
        KnowledgeBase {
            index: build_flat(entries).unwrap().into(),
            chunks: ChunkStore::from_records(records).unwrap(),
        }
    }

    fn record(id: &str, topic: Topic, text: &str) -> ChunkRecord {
        ChunkRecord {
            chunk_id: id.into(),
            doc_id: "d".into(),
            doc_title: "D".into(),
            topic,
            section_path: vec![],
            text: text.into(),
        }
    }

    #[test]
    fn sentences_drop_unterminated_tail() {
        let s = whole_sentences("Loam holds water. Clay drains slowly, e.g. in spring! Tail without end");
        assert_eq!(s, ["Loam holds water.", "Clay drains slowly, e.g.", "in spring!"]);
        assert_eq!(whole_sentences("ment of roots. Next one here."), ["ment of roots.", "Next one here."]);
        assert_eq!(whole_sentences("## Heading.\n\nBody text here.\nMore"), ["Body text here."]);
        assert!(whole_sentences("").is_empty());
    }

    #[test]
    fn builds_unique_questions_per_topic() {
        let embedder = HashedTrigramEmbedder::new("local", 512);
        let kb = kb(vec![
            record(
                "a#0",
                Topic::AgricultureForestry,
                "Forests cover a third of land. Thinning removes weaker stems to favor crop trees. \
                 Shared sentence that appears in two separate chunks here.",
            ),
            record(
                "a#1",
                Topic::AgricultureForestry,
                "Shared sentence that appears in two separate chunks here. Coppiced stools resprout vigorously after each winter harvest.",
            ),
            record(
                "b#0",
                Topic::PrecisionAgriculture,
                "Yield monitors log grain flow. Variable rate seeding adjusts population across management zones.",
            ),
        ], &embedder);
        let bank = synthesize_bank(&kb, &embedder, 20).unwrap();
        assert_eq!(bank.len(), 3);
        assert_eq!(bank[0].question, "Thinning removes weaker stems to favor crop trees.");
        assert_eq!(bank[0].reference_answers, ["Forests cover a third of land."]);
        assert_eq!(bank[0].id, "agriculture-forestry-01");
        assert_eq!(bank[1].question, "Coppiced stools resprout vigorously after each winter harvest.");
        assert_eq!(bank[2].relevant_chunk_ids.iter().next().unwrap(), "b#0");

        assert_eq!(synthesize_bank(&kb, &embedder, 1).unwrap().len(), 2);
        assert!(synthesize_bank(&kb, &embedder, 0).unwrap().is_empty());
    }
}
