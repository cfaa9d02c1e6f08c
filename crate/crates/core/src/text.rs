//! Small text utilities shared by stats, the mock models and BLEU.

/// Lowercased alphanumeric runs; everything else separates tokens.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Lowercases and splits on whitespace and punctuation boundaries.
///
/// Alphanumeric runs become tokens and every other non-whitespace character
/// stands alone, so `"soil."` is `["soil", "."]`.
pub fn bleu_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
            continue;
        }
        if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
        if !c.is_whitespace() {
            tokens.push(c.to_lowercase().collect());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Text up to and including the first `.`, `!` or `?`, with leading
/// whitespace removed. Returns the whole trimmed text when no terminator exists.
pub fn first_sentence(text: &str) -> &str {
    let text = text.trim_start();
    match text.find(['.', '!', '?']) {
        Some(pos) => &text[..=pos],
        None => text.trim_end(),
    }
}

/// Lowercase with runs of whitespace collapsed to one space.
pub fn normalize_for_match(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}
