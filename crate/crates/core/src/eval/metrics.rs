use std::collections::{HashMap, HashSet};

use super::EvalError;
use crate::text::bleu_tokens;

/// One query's ranked retrieval output and its relevance judgments.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RankedResult {
    pub ranked_ids: Vec<String>,
    pub relevant: HashSet<String>,
}

impl RankedResult {
    pub fn new<I, J, S, T>(ranked: I, relevant: J) -> Self
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: Into<String>,
        T: Into<String>,
    {
        Self {
            ranked_ids: ranked.into_iter().map(Into::into).collect(),
            relevant: relevant.into_iter().map(Into::into).collect(),
        }
    }

    fn reciprocal_rank(&self) -> f64 {
        self.ranked_ids
            .iter()
            .position(|id| self.relevant.contains(id))
            .map_or(0.0, |p| 1.0 / (p + 1) as f64)
    }
}

/// Mean reciprocal rank of the first relevant id; misses contribute 0.
pub fn mrr(results: &[RankedResult]) -> Result<f64, EvalError> {
    if results.is_empty() {
        return Err(EvalError::NoResults);
    }
    Ok(results.iter().map(RankedResult::reciprocal_rank).sum::<f64>() / results.len() as f64)
}

/// Mean of `|top-k ∩ relevant| / |relevant|` over queries that have any
/// relevant ids.
pub fn recall_at_k(results: &[RankedResult], k: usize) -> Result<f64, EvalError> {
    if k < 1 {
        return Err(EvalError::InvalidK);
    }
    let scored: Vec<f64> = results
        .iter()
        .filter(|r| !r.relevant.is_empty())
        .map(|r| {
            let top: HashSet<&String> = r.ranked_ids.iter().take(k).collect();
            let found = r.relevant.iter().filter(|id| top.contains(id)).count();
            found as f64 / r.relevant.len() as f64
        })
        .collect();
    if scored.is_empty() {
        return Err(EvalError::NoRelevantJudgments);
    }
    Ok(scored.iter().sum::<f64>() / scored.len() as f64)
}

pub const BLEU_MAX_ORDER: usize = 4;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence-level BLEU-4.
///
/// Clipped n-gram precisions for n = 1..4, add-one smoothing for n ≥ 2,
/// uniform weights, and a brevity penalty against the closest reference
/// length (shorter wins ties). An empty candidate, no references, or zero
/// unigram matches score 0.
pub fn bleu<S: AsRef<str>>(candidate: &str, references: &[S]) -> f64 {
    let cand = bleu_tokens(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| bleu_tokens(r.as_ref())).collect();
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }

    let mut log_precision = 0.0;
    for n in 1..=BLEU_MAX_ORDER {
        let cand_counts = ngram_counts(&cand, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in &refs {
            for (gram, count) in ngram_counts(r, n) {
                let slot = max_ref.entry(gram).or_insert(0);
                *slot = (*slot).max(count);
            }
        }
        let matches: usize = cand_counts
            .iter()
            .map(|(gram, &count)| count.min(max_ref.get(gram).copied().unwrap_or(0)))
            .sum();
        let total = cand.len().saturating_sub(n - 1);
        let precision = if n == 1 {
            if matches == 0 {
                return 0.0;
            }
            matches as f64 / total as f64
        } else {
            (matches + 1) as f64 / (total + 1) as f64
        };
        log_precision += precision.ln() / BLEU_MAX_ORDER as f64;
    }

    let c = cand.len();
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("at least one reference");
    let brevity = if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    brevity * log_precision.exp()
}
