use harvest_core::corpus::{ChunkParamsError, CorpusError};
use harvest_core::embedding::EmbeddingError;
use harvest_core::eval::EvalError;
use harvest_core::knowledge::KnowledgeError;
use harvest_core::llm::LlmError;
use harvest_core::rag::RagError;
use harvest_service::{ConfigError, ServeError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Provider(String),
    #[error("{0}")]
    Threshold(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Provider(_) => 3,
            CliError::Threshold(_) => 4,
        }
    }

    pub fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ChunkParamsError> for CliError {
    fn from(e: ChunkParamsError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::Provider { .. } | EmbeddingError::DimensionMismatch { .. } | EmbeddingError::InvalidConfig(_) => {
                CliError::Provider(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        CliError::Provider(e.to_string())
    }
}

impl From<KnowledgeError> for CliError {
    fn from(e: KnowledgeError) -> Self {
        match e {
            KnowledgeError::Embedding(e) => e.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<RagError> for CliError {
    fn from(e: RagError) -> Self {
        if e.is_provider_failure() {
            return CliError::Provider(e.to_string());
        }
        match e {
            RagError::EmptyQuery | RagError::QueryTooLong { .. } | RagError::InvalidParams(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Pipeline { source, question } => match CliError::from(source) {
                CliError::Provider(m) => CliError::Provider(format!("question {question}: {m}")),
                other => CliError::Data(format!("question {question}: {other}")),
            },
            EvalError::InvalidK | EvalError::InvalidRepeats | EvalError::InvalidCriterion(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ServeError> for CliError {
    fn from(e: ServeError) -> Self {
        match e {
            ServeError::Startup(harvest_service::StartupError::Embedding(e)) => e.into(),
            ServeError::Startup(harvest_service::StartupError::Llm(e)) => e.into(),
            ServeError::Bind { .. } => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}
