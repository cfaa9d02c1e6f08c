use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::Topic;

/// Retrieval and answer-overlap metrics for one pipeline configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationRow {
    pub config_label: String,
    /// `None` when no question carries relevance judgments.
    pub mrr: Option<f64>,
    pub recall_at_k: Option<f64>,
    pub bleu: f64,
    #[serde(default)]
    pub question_count: usize,
    #[serde(default)]
    pub answer_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicRow {
    pub config_label: String,
    pub topic: Topic,
    #[serde(default)]
    pub question_count: usize,
    #[serde(default)]
    pub answer_count: usize,
    pub accuracy_pct: f64,
    pub avg_time_s: f64,
}

/// Unweighted mean of a configuration's topic rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicAverage {
    pub config_label: String,
    pub accuracy_pct: f64,
    pub avg_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub recall_k: usize,
    #[serde(default)]
    pub criterion: String,
    #[serde(default)]
    pub repeats: usize,
    pub configurations: Vec<ConfigurationRow>,
    pub topics: Vec<TopicRow>,
    pub averages: Vec<TopicAverage>,
}

const AVERAGE_TOLERANCE: f64 = 1e-9;

fn labels_in_order<'a>(rows: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut labels: Vec<&str> = Vec::new();
    for label in rows {
        if !labels.contains(&label) {
            labels.push(label);
        }
    }
    labels
}

fn averages_of(topics: &[TopicRow]) -> Vec<TopicAverage> {
    labels_in_order(topics.iter().map(|t| t.config_label.as_str()))
        .into_iter()
        .map(|label| {
            let rows: Vec<&TopicRow> = topics.iter().filter(|t| t.config_label == label).collect();
            let n = rows.len() as f64;
            TopicAverage {
                config_label: label.to_string(),
                accuracy_pct: rows.iter().map(|t| t.accuracy_pct).sum::<f64>() / n,
                avg_time_s: rows.iter().map(|t| t.avg_time_s).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Fixed-point with `decimals` places, trailing zeros and a bare point removed.
pub fn format_metric(value: f64, decimals: usize) -> String {
    let s = format!("{value:.decimals$}");
    if !s.contains('.') {
        return s;
    }
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn format_optional(value: Option<f64>, render: impl Fn(f64) -> String) -> String {
    value.map_or_else(|| "n/a".to_string(), render)
}

impl MetricsReport {
    /// Assembles a report, deriving the per-configuration averages.
    pub fn from_rows(recall_k: usize, configurations: Vec<ConfigurationRow>, topics: Vec<TopicRow>) -> Self {
        let averages = averages_of(&topics);
        Self {
            recall_k,
            criterion: String::new(),
            repeats: 0,
            configurations,
            topics,
            averages,
        }
    }

    /// Appends another report's rows; both must use the same cutoff.
    pub fn merge(&mut self, other: MetricsReport) -> Result<(), EvalError> {
        if other.recall_k != self.recall_k {
            return Err(EvalError::InvalidReport(format!(
                "cannot merge Recall@{} into Recall@{}",
                other.recall_k, self.recall_k
            )));
        }
        self.configurations.extend(other.configurations);
        self.topics.extend(other.topics);
        self.averages = averages_of(&self.topics);
        Ok(())
    }

    /// Checks metric ranges and that averages match their topic rows.
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidReport(m));
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        for c in &self.configurations {
            if !c.mrr.is_none_or(unit) || !c.recall_at_k.is_none_or(unit) || !unit(c.bleu) {
                return bad(format!("{}: metric outside [0, 1]", c.config_label));
            }
        }
        for t in &self.topics {
            if !(0.0..=100.0).contains(&t.accuracy_pct) {
                return bad(format!("{} / {}: accuracy outside [0, 100]", t.config_label, t.topic));
            }
            if !(t.avg_time_s >= 0.0 && t.avg_time_s.is_finite()) {
                return bad(format!("{} / {}: invalid average time", t.config_label, t.topic));
            }
        }
        let expected = averages_of(&self.topics);
        if expected.len() != self.averages.len() {
            return bad("averages do not cover every configuration".into());
        }
        for (want, got) in expected.iter().zip(&self.averages) {
            if want.config_label != got.config_label
                || (want.accuracy_pct - got.accuracy_pct).abs() > AVERAGE_TOLERANCE
                || (want.avg_time_s - got.avg_time_s).abs() > AVERAGE_TOLERANCE
            {
                return bad(format!("{}: average differs from topic rows", got.config_label));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `Model | MRR | Recall@k | BLEU`, with recall and BLEU in percent.
    pub fn embedding_table(&self) -> String {
        let mut out = format!("Model | MRR | Recall@{} | BLEU\n", self.recall_k);
        for c in &self.configurations {
            let _ = writeln!(
                out,
                "{} | {} | {} | {}",
                c.config_label,
                format_optional(c.mrr, |v| format!("{v:.2}")),
                format_optional(c.recall_at_k, |v| format_metric(v * 100.0, 2)),
                format_metric(c.bleu * 100.0, 2),
            );
        }
        out
    }

    /// One `Topic | Acc. (%) | Avg. Time (s)` block per configuration.
    pub fn performance_tables(&self) -> String {
        let mut out = String::new();
        for avg in &self.averages {
            if !out.is_empty() {
                out.push('\n');
            }
            let _ = writeln!(out, "Performance: {}", avg.config_label);
            out.push_str("Topic | Acc. (%) | Avg. Time (s)\n");
            let rows = self.topics.iter().filter(|t| t.config_label == avg.config_label);
            for (i, t) in rows.enumerate() {
                let _ = writeln!(
                    out,
                    "{}. {} | {} | {}",
                    i + 1,
                    t.topic.display_name(),
                    format_metric(t.accuracy_pct, 2),
                    format_metric(t.avg_time_s, 3),
                );
            }
            let _ = writeln!(
                out,
                "Average | {} | {}",
                format_metric(avg.accuracy_pct, 2),
                format_metric(avg.avg_time_s, 3)
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        format!("Embedding quality\n{}\n{}", self.embedding_table(), self.performance_tables())
    }
}
