use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{
    bleu, check_unique, judge_accuracy, mrr, recall_at_k, ConfigurationRow, Criterion, EvalError,
    EvalQuestion, MetricsReport, RankedResult, TopicRow,
};
use crate::corpus::Topic;
use crate::embedding::Embedder;
use crate::knowledge::KnowledgeBase;
use crate::llm::ChatModel;
use crate::rag::{answer_query, RagError, RagParams};

pub const DEFAULT_RECALL_K: usize = 10;

/// One configuration under test.
pub struct Pipeline<'a> {
    pub label: String,
    pub kb: &'a KnowledgeBase,
    pub embedder: &'a dyn Embedder,
    pub llm: &'a dyn ChatModel,
    pub params: RagParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkOptions {
    pub criterion: Criterion,
    pub repeats: usize,
    pub recall_k: usize,
    /// Answer questions concurrently. Latencies then include contention,
    /// but every other metric is unchanged.
    pub parallel: bool,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            criterion: Criterion::default(),
            repeats: 1,
            recall_k: DEFAULT_RECALL_K,
            parallel: false,
        }
    }
}

struct Outcome {
    ranked: RankedResult,
    correct: usize,
    bleu_sum: f64,
    latency_ms: u64,
}

fn ranked_ids(question: &str, pipeline: &Pipeline<'_>, k: usize) -> Result<Vec<String>, RagError> {
    let index = &pipeline.kb.index;
    let vector = pipeline.embedder.embed(question).map_err(RagError::Embed)?;
    if vector.provider_id() != index.provider_id() {
        return Err(RagError::ProviderMismatch {
            index: index.provider_id().to_string(),
            query: vector.provider_id().to_string(),
        });
    }
    let hits = index
        .search(&vector, k, pipeline.params.nprobe)
        .map_err(RagError::Search)?;
    Ok(hits.into_iter().map(|h| h.chunk_id).collect())
}

fn evaluate(q: &EvalQuestion, pipeline: &Pipeline<'_>, options: &BenchmarkOptions) -> Result<Outcome, EvalError> {
    let failed = |source| EvalError::Pipeline {
        question: q.id.clone(),
        source,
    };
    let ranked = ranked_ids(&q.question, pipeline, options.recall_k).map_err(failed)?;
    let mut outcome = Outcome {
        ranked: RankedResult {
            ranked_ids: ranked,
            relevant: q.relevant_chunk_ids.iter().cloned().collect(),
        },
        correct: 0,
        bleu_sum: 0.0,
        latency_ms: 0,
    };
    for _ in 0..options.repeats {
        let answer = answer_query(&q.question, &pipeline.params, pipeline.kb, pipeline.embedder, pipeline.llm)
            .map_err(failed)?;
        outcome.correct += usize::from(judge_accuracy(&answer, q, options.criterion));
        outcome.bleu_sum += bleu(&answer.text, &q.reference_answers);
        outcome.latency_ms += answer.latency_ms;
    }
    Ok(outcome)
}

#[derive(Default)]
struct TopicTally {
    questions: usize,
    correct: usize,
    latency_ms: u64,
}

/// Runs every question `repeats` times through the pipeline and scores it.
///
/// MRR and Recall@k come from the unthresholded top-`recall_k` ranking and
/// only cover questions with relevance judgments; they are `None` when no
/// question has any.
pub fn run_benchmark(
    bank: &[EvalQuestion],
    pipeline: &Pipeline<'_>,
    options: &BenchmarkOptions,
) -> Result<MetricsReport, EvalError> {
    if bank.is_empty() {
        return Err(EvalError::EmptyBank);
    }
    if options.repeats < 1 {
        return Err(EvalError::InvalidRepeats);
    }
    if options.recall_k < 1 {
        return Err(EvalError::InvalidK);
    }
    check_unique(bank)?;
    for q in bank {
        if let Some(id) = q.relevant_chunk_ids.iter().find(|id| !pipeline.kb.index.contains(id)) {
            return Err(EvalError::UnknownChunk {
                question: q.id.clone(),
                chunk_id: id.clone(),
            });
        }
    }
    pipeline
        .params
        .validate()
        .map_err(|source| EvalError::Pipeline {
            question: bank[0].id.clone(),
            source,
        })?;

    let outcomes: Vec<Outcome> = if options.parallel {
        bank.par_iter().map(|q| evaluate(q, pipeline, options)).collect::<Result<_, _>>()?
    } else {
        bank.iter().map(|q| evaluate(q, pipeline, options)).collect::<Result<_, _>>()?
    };

    let judged: Vec<RankedResult> = outcomes
        .iter()
        .filter(|o| !o.ranked.relevant.is_empty())
        .map(|o| o.ranked.clone())
        .collect();
    let (mrr_value, recall_value) = if judged.is_empty() {
        (None, None)
    } else {
        (Some(mrr(&judged)?), Some(recall_at_k(&judged, options.recall_k)?))
    };

    let answers = bank.len() * options.repeats;
    let mut tallies: BTreeMap<&Topic, TopicTally> = BTreeMap::new();
    for (q, o) in bank.iter().zip(&outcomes) {
        let t = tallies.entry(&q.topic).or_default();
        t.questions += 1;
        t.correct += o.correct;
        t.latency_ms += o.latency_ms;
    }
    let topics = tallies
        .into_iter()
        .map(|(topic, t)| {
            let n = (t.questions * options.repeats) as f64;
            TopicRow {
                config_label: pipeline.label.clone(),
                topic: topic.clone(),
                question_count: t.questions,
                answer_count: t.questions * options.repeats,
                accuracy_pct: 100.0 * t.correct as f64 / n,
                avg_time_s: t.latency_ms as f64 / 1000.0 / n,
            }
        })
        .collect();

    let configuration = ConfigurationRow {
        config_label: pipeline.label.clone(),
        mrr: mrr_value,
        recall_at_k: recall_value,
        bleu: outcomes.iter().map(|o| o.bleu_sum).sum::<f64>() / answers as f64,
        question_count: bank.len(),
        answer_count: answers,
    };
    let mut report = MetricsReport::from_rows(options.recall_k, vec![configuration], topics);
    report.criterion = options.criterion.to_string();
    report.repeats = options.repeats;
    Ok(report)
}
