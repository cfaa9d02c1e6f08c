//! Question banks, retrieval and answer metrics, and benchmark reports.

mod bank;
mod bench;
mod judge;
mod metrics;
mod report;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Topic;
use crate::rag::RagError;

pub use bank::synthesize_bank;
pub use bench::{run_benchmark, BenchmarkOptions, Pipeline, DEFAULT_RECALL_K};
pub use judge::{judge_accuracy, Criterion};
pub use metrics::{bleu, mrr, recall_at_k, RankedResult, BLEU_MAX_ORDER};
pub use report::{format_metric, ConfigurationRow, MetricsReport, TopicAverage, TopicRow};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no results to score")]
    NoResults,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("no query has relevance judgments")]
    NoRelevantJudgments,
    #[error("question bank is empty")]
    EmptyBank,
    #[error("repeats must be at least 1")]
    InvalidRepeats,
    #[error("question {question:?} references unknown chunk {chunk_id:?}")]
    UnknownChunk { question: String, chunk_id: String },
    #[error("invalid question {id:?}: {reason}")]
    InvalidQuestion { id: String, reason: String },
    #[error("duplicate question id {0:?}")]
    DuplicateQuestion(String),
    #[error("invalid criterion {0:?}")]
    InvalidCriterion(String),
    #[error("question {question:?} failed: {source}")]
    Pipeline {
        question: String,
        #[source]
        source: RagError,
    },
    #[error("invalid report: {0}")]
    InvalidReport(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalQuestion {
    pub id: String,
    pub topic: Topic,
    pub question: String,
    /// Empty only for questions that probe the fallback path.
    #[serde(default)]
    pub relevant_chunk_ids: BTreeSet<String>,
    pub reference_answers: Vec<String>,
}

impl EvalQuestion {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |reason: &str| {
            Err(EvalError::InvalidQuestion {
                id: self.id.clone(),
                reason: reason.into(),
            })
        };
        if self.id.is_empty() {
            return bad("id is empty");
        }
        if self.question.trim().is_empty() {
            return bad("question is empty");
        }
        if self.reference_answers.is_empty() {
            return bad("needs at least one reference answer");
        }
        Ok(())
    }
}

fn check_unique(bank: &[EvalQuestion]) -> Result<(), EvalError> {
    let mut seen = BTreeSet::new();
    for q in bank {
        q.validate()?;
        if !seen.insert(q.id.as_str()) {
            return Err(EvalError::DuplicateQuestion(q.id.clone()));
        }
    }
    Ok(())
}

pub fn load_question_bank(path: &Path) -> Result<Vec<EvalQuestion>, EvalError> {
    let content = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut bank = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: EvalQuestion = serde_json::from_str(line).map_err(|e| EvalError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        bank.push(q);
    }
    check_unique(&bank)?;
    Ok(bank)
}

pub fn save_question_bank(bank: &[EvalQuestion], path: &Path) -> Result<(), EvalError> {
    let mut out = String::new();
    for q in bank {
        out.push_str(&serde_json::to_string(q).expect("question serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}
