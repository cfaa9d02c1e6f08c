use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::Deserialize;
use walkdir::WalkDir;

use super::{CorpusError, Document, Heading, SourceKind, Topic};

const UNCATEGORIZED: &str = "uncategorized";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    /// One JSON document per line. A directory loads every `*.jsonl` in it.
    Jsonl,
    /// `.txt`/`.md` files; the first-level subdirectory names the topic.
    Directory,
}

impl CorpusFormat {
    /// Plain files are JSONL, directories are text trees.
    pub fn detect(path: &Path) -> Self {
        if path.is_dir() {
            CorpusFormat::Directory
        } else {
            CorpusFormat::Jsonl
        }
    }
}

/// Line-based heading detector for plain-text documents.
///
/// The regex runs per line. A `marks` capture group sets the level from its
/// character count (level 1 if absent); a `text` group supplies the heading
/// text (the whole trimmed line if absent).
#[derive(Debug, Clone)]
pub struct HeadingPattern {
    regex: Regex,
}

impl HeadingPattern {
    pub const MARKDOWN: &'static str = r"^(?P<marks>#{1,6})[ \t]+(?P<text>.*?)[ \t#]*$";

    pub fn new(pattern: &str) -> Result<Self, CorpusError> {
        Regex::new(pattern)
            .map(|regex| Self { regex })
            .map_err(|e| CorpusError::HeadingPattern(e.to_string()))
    }

    pub fn detect(&self, text: &str) -> Vec<Heading> {
        let mut headings = Vec::new();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let content = line.trim_end_matches(['\n', '\r']);
            if let Some(caps) = self.regex.captures(content) {
                let level = caps
                    .name("marks")
                    .map(|m| m.as_str().chars().count() as u32)
                    .unwrap_or(1)
                    .max(1);
                let heading_text = caps
                    .name("text")
                    .map(|m| m.as_str())
                    .unwrap_or(content)
                    .trim();
                headings.push(Heading {
                    offset,
                    level,
                    text: heading_text.to_string(),
                });
            }
            offset += line.chars().count();
        }
        headings
    }
}

impl Default for HeadingPattern {
    fn default() -> Self {
        Self::new(Self::MARKDOWN).expect("markdown heading regex compiles")
    }
}

#[derive(Debug, Clone, Default)]
pub struct CorpusLoader {
    pub heading_pattern: HeadingPattern,
}

#[derive(Deserialize)]
struct JsonlRecord {
    id: String,
    title: String,
    topic: String,
    source_kind: SourceKind,
    text: String,
    #[serde(default)]
    headings: Vec<Heading>,
}

impl CorpusLoader {
    pub fn load(&self, path: &Path, format: CorpusFormat) -> Result<Vec<Document>, CorpusError> {
        let docs = match format {
            CorpusFormat::Jsonl if path.is_dir() => {
                let mut docs = Vec::new();
                for file in sorted_files(path, &["jsonl"])? {
                    docs.extend(load_jsonl_file(&file)?);
                }
                docs
            }
            CorpusFormat::Jsonl => load_jsonl_file(path)?,
            CorpusFormat::Directory => self.load_text_tree(path)?,
        };
        let mut seen = HashSet::new();
        for doc in &docs {
            if !seen.insert(doc.id.as_str()) {
                return Err(CorpusError::DuplicateId(doc.id.clone()));
            }
        }
        Ok(docs)
    }

    fn load_text_tree(&self, root: &Path) -> Result<Vec<Document>, CorpusError> {
        let mut docs = Vec::new();
        for file in sorted_files(root, &["txt", "md"])? {
            let relative = file.strip_prefix(root).unwrap_or(&file);
            let components: Vec<String> = relative
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect();
            let topic = if components.len() > 1 {
                Topic::from_label(&components[0])?
            } else {
                Topic::Other(UNCATEGORIZED.into())
            };
            let text = fs::read_to_string(&file).map_err(|source| CorpusError::Io {
                path: file.clone(),
                source,
            })?;
            let headings = self.heading_pattern.detect(&text);
            let title = headings
                .first()
                .map(|h| h.text.clone())
                .filter(|t| !t.is_empty())
                .or_else(|| file.file_stem().map(|s| s.to_string_lossy().into_owned()))
                .unwrap_or_default();
            let doc = Document {
                id: components.join("/"),
                title,
                topic,
                source_kind: SourceKind::Textbook,
                text,
                headings,
            };
            doc.validate()?;
            docs.push(doc);
        }
        Ok(docs)
    }
}

/// Loads a corpus with the default Markdown heading detector.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<Document>, CorpusError> {
    CorpusLoader::default().load(path, format)
}

fn sorted_files(root: &Path, extensions: &[&str]) -> Result<Vec<PathBuf>, CorpusError> {
    let mut files = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| CorpusError::Io {
            path: e.path().unwrap_or(root).to_path_buf(),
            source: e
                .into_io_error()
                .unwrap_or_else(|| std::io::Error::other("directory walk failed")),
        })?;
        let matches = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| extensions.contains(&e));
        if entry.file_type().is_file() && matches {
            files.push(entry.into_path());
        }
    }
    Ok(files)
}

fn load_jsonl_file(path: &Path) -> Result<Vec<Document>, CorpusError> {
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let malformed = |line: usize, message: String| CorpusError::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut docs = Vec::new();
    for (index, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = index + 1;
        let record: JsonlRecord =
            serde_json::from_str(line).map_err(|e| malformed(line_no, e.to_string()))?;
        let topic = Topic::from_label(&record.topic).map_err(|e| malformed(line_no, e.to_string()))?;
        let doc = Document {
            id: record.id,
            title: record.title,
            topic,
            source_kind: record.source_kind,
            text: record.text,
            headings: record.headings,
        };
        doc.validate().map_err(|e| malformed(line_no, e.to_string()))?;
        docs.push(doc);
    }
    Ok(docs)
}
