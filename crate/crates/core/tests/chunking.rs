use harvest_core::corpus::{chunk_document, Document, Heading, SourceKind, Topic};
use harvest_core::ChunkParams;
use proptest::prelude::*;

fn doc(text: String, headings: Vec<Heading>) -> Document {
    Document {
        id: "doc".into(),
        title: "Doc".into(),
        topic: Topic::AgricultureLifeSciences,
        source_kind: SourceKind::Textbook,
        text,
        headings,
    }
}

/// Rebuilds the text from chunk spans, trimming each chunk's overlap.
fn reconstruct(chunks: &[harvest_core::Chunk]) -> String {
    let mut out = String::new();
    let mut covered = 0;
    for c in chunks {
        let skip = covered - c.span.0;
        out.extend(c.text.chars().skip(skip));
        covered = c.span.1;
    }
    out
}

#[test]
fn fixed_spans_for_2500_chars() {
    let text: String = (0..2500).map(|i| char::from(b'a' + (i % 26) as u8)).collect();
    let chunks = chunk_document(&doc(text, vec![]), &ChunkParams::new(1000, 200).unwrap());
    let spans: Vec<(usize, usize)> = chunks.iter().map(|c| c.span).collect();
    assert_eq!(spans, [(0, 1000), (800, 1800), (1600, 2500)]);
    let ids: Vec<&str> = chunks.iter().map(|c| c.id.as_str()).collect();
    assert_eq!(ids, ["doc#0", "doc#1", "doc#2"]);
}

#[test]
fn short_and_empty_documents() {
    let one = chunk_document(&doc("x".repeat(900), vec![]), &ChunkParams::default());
    assert_eq!(one.len(), 1);
    assert_eq!(one[0].span, (0, 900));
    assert!(chunk_document(&doc(String::new(), vec![]), &ChunkParams::default()).is_empty());
}

fn text_and_headings() -> impl Strategy<Value = (String, Vec<Heading>)> {
    (0usize..20_000, any::<u64>()).prop_map(|(len, seed)| {
        let alphabet: Vec<char> = "abcdefghij klmnop.\nçé土".chars().collect();
        let mut state = seed | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        let text: String = (0..len).map(|_| alphabet[(next() % alphabet.len() as u64) as usize]).collect();
        let mut headings = Vec::new();
        let mut offset = 0usize;
        loop {
            offset += 1 + (next() % 3000) as usize;
            if offset >= len {
                break;
            }
            headings.push(Heading {
                offset,
                level: 1 + (next() % 3) as u32,
                text: format!("h{offset}"),
            });
        }
        (text, headings)
    })
}

fn params() -> impl Strategy<Value = ChunkParams> {
    (1usize..3000).prop_flat_map(|target| (Just(target), 0..target)).prop_map(|(t, o)| ChunkParams::new(t, o).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn chunks_reconstruct_and_cover((text, headings) in text_and_headings(), params in params()) {
        let d = doc(text, headings);
        d.validate().unwrap();
        let chunks = chunk_document(&d, &params);
        let len = d.text.chars().count();
        if len == 0 {
            prop_assert!(chunks.is_empty());
            return Ok(());
        }
        prop_assert_eq!(reconstruct(&chunks), d.text.clone());
        prop_assert_eq!(chunks[0].span.0, 0);
        prop_assert_eq!(chunks.last().unwrap().span.1, len);
        for (i, c) in chunks.iter().enumerate() {
            prop_assert_eq!(c.ordinal, i);
            prop_assert_eq!(c.span.0, i * params.stride());
            prop_assert!(c.span.1 - c.span.0 <= params.target_size());
            prop_assert_eq!(c.text.chars().count(), c.span.1 - c.span.0);
            let active: Vec<&Heading> = d.headings.iter().filter(|h| h.offset <= c.span.0).collect();
            if active.is_empty() {
                prop_assert!(c.section_path.is_empty());
            } else {
                prop_assert_eq!(c.section_path.last().unwrap(), &active.last().unwrap().text);
            }
        }
        prop_assert_eq!(chunk_document(&d, &params), chunks);
    }
}
