//! Documents, topics and overlapping chunks with section metadata.

mod chunk;
mod load;
mod stats;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chunk::{chunk_document, chunk_documents, ChunkParams, ChunkParamsError};
pub use load::{load_corpus, CorpusFormat, CorpusLoader, HeadingPattern};
pub use stats::{corpus_stats, CorpusStats, WORDS_PER_PAGE};

/// Subject area a document belongs to.
///
/// The five named variants correspond to the corpus folder layout; anything
/// else is carried verbatim in [`Topic::Other`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Topic {
    AgricultureLifeSciences,
    AgriculturalManagement,
    AgricultureForestry,
    AgricultureBusiness,
    PrecisionAgriculture,
    Other(String),
}

const TOPIC_TABLE: &[(&str, Topic)] = &[
    ("agriculture-life-sciences", Topic::AgricultureLifeSciences),
    ("agriculture-and-life-sciences", Topic::AgricultureLifeSciences),
    ("agriculturelifesciences", Topic::AgricultureLifeSciences),
    ("agricultural-management", Topic::AgriculturalManagement),
    ("agriculturalmanagement", Topic::AgriculturalManagement),
    ("agriculture-forestry", Topic::AgricultureForestry),
    ("agriculture-and-forestry", Topic::AgricultureForestry),
    ("agricultureforestry", Topic::AgricultureForestry),
    ("agriculture-business", Topic::AgricultureBusiness),
    ("agriculturebusiness", Topic::AgricultureBusiness),
    ("precision-agriculture", Topic::PrecisionAgriculture),
    ("precisionagriculture", Topic::PrecisionAgriculture),
];

impl Topic {
    /// Maps a folder or field name onto a topic.
    ///
    /// Matching is exact after lowercasing and turning spaces and underscores
    /// into hyphens. Unknown names become `Other(name)`; an empty name is an error.
    pub fn from_label(label: &str) -> Result<Self, CorpusError> {
        let trimmed = label.trim();
        if trimmed.is_empty() {
            return Err(CorpusError::EmptyTopic);
        }
        let key: String = trimmed
            .chars()
            .map(|c| match c {
                ' ' | '_' => '-',
                c => c.to_ascii_lowercase(),
            })
            .collect();
        Ok(TOPIC_TABLE
            .iter()
            .find(|(name, _)| *name == key)
            .map(|(_, topic)| topic.clone())
            .unwrap_or_else(|| Topic::Other(trimmed.to_string())))
    }

    /// Canonical machine label, the inverse of [`Topic::from_label`].
    pub fn slug(&self) -> &str {
        match self {
            Topic::AgricultureLifeSciences => "agriculture-life-sciences",
            Topic::AgriculturalManagement => "agricultural-management",
            Topic::AgricultureForestry => "agriculture-forestry",
            Topic::AgricultureBusiness => "agriculture-business",
            Topic::PrecisionAgriculture => "precision-agriculture",
            Topic::Other(label) => label,
        }
    }

    /// Human-readable name used in report tables.
    pub fn display_name(&self) -> &str {
        match self {
            Topic::AgricultureLifeSciences => "Agriculture and life sciences",
            Topic::AgriculturalManagement => "Agricultural management",
            Topic::AgricultureForestry => "Agriculture forestry",
            Topic::AgricultureBusiness => "Agriculture business",
            Topic::PrecisionAgriculture => "Precision agriculture",
            Topic::Other(label) => label,
        }
    }

    pub fn named() -> [Topic; 5] {
        [
            Topic::AgricultureLifeSciences,
            Topic::AgriculturalManagement,
            Topic::AgricultureForestry,
            Topic::AgricultureBusiness,
            Topic::PrecisionAgriculture,
        ]
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl From<Topic> for String {
    fn from(topic: Topic) -> Self {
        topic.slug().to_string()
    }
}

impl TryFrom<String> for Topic {
    type Error = CorpusError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Topic::from_label(&value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Textbook,
    Article,
    Web,
    QuestionBank,
}

/// A section heading located by character offset into [`Document::text`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Heading {
    pub offset: usize,
    pub level: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub topic: Topic,
    pub source_kind: SourceKind,
    pub text: String,
    #[serde(default)]
    pub headings: Vec<Heading>,
}

impl Document {
    /// Checks heading offsets and levels against the text.
    ///
    /// Offsets count Unicode scalar values, not bytes.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |reason: String| CorpusError::InvalidDocument {
            id: self.id.clone(),
            reason,
        };
        if self.id.is_empty() {
            return Err(invalid("empty id".into()));
        }
        let len = self.text.chars().count();
        let mut previous: Option<usize> = None;
        for heading in &self.headings {
            if heading.level < 1 {
                return Err(invalid(format!(
                    "heading {:?} has level 0",
                    heading.text
                )));
            }
            if heading.offset >= len {
                return Err(invalid(format!(
                    "heading offset {} is past the end of the text ({len} chars)",
                    heading.offset
                )));
            }
            if previous.is_some_and(|p| heading.offset <= p) {
                return Err(invalid(format!(
                    "heading offsets must be strictly increasing (got {} after {})",
                    heading.offset,
                    previous.unwrap_or_default()
                )));
            }
            previous = Some(heading.offset);
        }
        Ok(())
    }
}

/// A contiguous, possibly overlapping window over a document.
///
/// `span` is a half-open range of character offsets into the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: String,
    pub doc_id: String,
    pub ordinal: usize,
    pub topic: Topic,
    pub section_path: Vec<String>,
    pub text: String,
    pub span: (usize, usize),
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
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
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("document {id:?}: {reason}")]
    InvalidDocument { id: String, reason: String },
    #[error("topic label must not be empty")]
    EmptyTopic,
    #[error("invalid heading pattern: {0}")]
    HeadingPattern(String),
}
