use thiserror::Error;

/// Errors raised by repository access.
#[derive(Debug, Error)]
pub enum RepoError {
    #[error("not a repository: {0}")]
    NotARepository(String),
    #[error("unknown revision: {0}")]
    UnknownRef(String),
    #[error("ambiguous commit prefix: {0}")]
    AmbiguousPrefix(String),
    #[error("binary file: {0}")]
    BinaryFile(String),
    #[error("file {path} absent at {rev}")]
    FileAbsent { rev: String, path: String },
    #[error("line {line} out of range for {path} ({len} lines)")]
    LineOutOfRange { path: String, line: usize, len: usize },
    #[error("trace did not terminate for {0}")]
    NonTerminatingTrace(String),
    #[error(transparent)]
    Git(#[from] git2::Error),
}

/// Diff text that could not be parsed.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed diff at byte {offset}: {reason}")]
pub struct MalformedDiff {
    pub offset: usize,
    pub reason: String,
}

/// Errors raised by the chat-completion gateway.
#[derive(Debug, Error)]
pub enum LlmError {
    #[error("no cassette entry for key {0}")]
    CassetteMiss(String),
    #[error("provider error: {0}")]
    ProviderError(String),
    #[error("scripted mode requires a registered responder")]
    ResponderUnset,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cassette io: {0}")]
    Io(#[from] std::io::Error),
}

impl LlmError {
    /// Configuration-level failures that must abort a run rather than
    /// degrade to a conservative answer.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            LlmError::CassetteMiss(_) | LlmError::ResponderUnset | LlmError::InvalidRequest(_)
        )
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("language model unavailable: {0}")]
    LlmUnavailable(#[source] LlmError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Repo(#[from] RepoError),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction/truth misalignment: {0}")]
    MisalignedDataset(String),
    #[error("missing repository: {0}")]
    MissingRepository(String),
    #[error("dataset line {line}: {reason}")]
    Dataset { line: usize, reason: String },
    #[error(transparent)]
    Repo(#[from] RepoError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}
