use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{bleu, EvalError, EvalQuestion};
use crate::rag::Answer;
use crate::text::normalize_for_match;

/// Automatic stand-in for manual answer grading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Criterion {
    /// BLEU against the references is at least the threshold.
    BleuThreshold(f64),
    /// Case- and whitespace-insensitive equality with some reference.
    ExactMatch,
    /// At least one cited chunk is judged relevant.
    CitationHit,
}

impl Default for Criterion {
    fn default() -> Self {
        Criterion::BleuThreshold(0.5)
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criterion::BleuThreshold(t) => write!(f, "bleu_threshold({t})"),
            Criterion::ExactMatch => f.write_str("exact_match"),
            Criterion::CitationHit => f.write_str("citation_hit"),
        }
    }
}

impl FromStr for Criterion {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = || EvalError::InvalidCriterion(s.to_string());
        match s.trim() {
            "exact_match" => Ok(Criterion::ExactMatch),
            "citation_hit" => Ok(Criterion::CitationHit),
            "bleu_threshold" => Ok(Criterion::default()),
            other => {
                let inner = other
                    .strip_prefix("bleu_threshold(")
                    .and_then(|rest| rest.strip_suffix(')'))
                    .or_else(|| other.strip_prefix("bleu_threshold="))
                    .ok_or_else(invalid)?;
                let t: f64 = inner.trim().parse().map_err(|_| invalid())?;
                if !(0.0..=1.0).contains(&t) {
                    return Err(invalid());
                }
                Ok(Criterion::BleuThreshold(t))
            }
        }
    }
}

impl TryFrom<String> for Criterion {
    type Error = EvalError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Criterion> for String {
    fn from(c: Criterion) -> Self {
        c.to_string()
    }
}

pub fn judge_accuracy(answer: &Answer, question: &EvalQuestion, criterion: Criterion) -> bool {
    match criterion {
        Criterion::BleuThreshold(t) => bleu(&answer.text, &question.reference_answers) >= t,
        Criterion::ExactMatch => {
            let got = normalize_for_match(&answer.text);
            question
                .reference_answers
                .iter()
                .any(|r| normalize_for_match(r) == got)
        }
        Criterion::CitationHit => answer
            .citations
            .iter()
            .any(|c| question.relevant_chunk_ids.contains(&c.chunk_id)),
    }
}
