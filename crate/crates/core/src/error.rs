use std::path::PathBuf;

use crate::corpus::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { label: String, line: usize },

    #[error("invalid task: {}", join_violations(.0))]
    InvalidTask(Vec<Violation>),

    #[error("stopword list {0} is empty")]
    EmptyStopwords(PathBuf),

    #[error("no vocabulary entry or byte fallback for {0:?}")]
    UnknownSurface(String),

    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: u32, size: usize },

    #[error("vocabulary: {0}")]
    Vocab(String),

    #[error("cannot sample {k} demonstrations from {size} records")]
    Sampling { k: usize, size: usize },

    #[error("template: {0}")]
    Template(String),

    #[error("unknown template set {0:?}")]
    UnknownTemplateSet(String),

    #[error("weight archive is missing tensor {0}")]
    MissingTensor(String),

    #[error("tensor {name} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("tensor {name} needs bytes up to {needed} but blob holds {available}")]
    TruncatedBlob {
        name: String,
        needed: usize,
        available: usize,
    },

    #[error("model config: {0}")]
    ModelConfig(String),

    #[error("invalid visibility plan: {0}")]
    InvalidPlan(String),

    #[error("verbalizer {0} tokenizes to nothing")]
    EmptyVerbalizer(usize),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dataset sets differ: {0}")]
    DatasetMismatch(String),

    #[error("need at least 2 paired samples, got {0}")]
    TooFewSamples(usize),

    #[error("ablation: {0}")]
    Ablation(String),

    #[error("unknown {kind} {name:?}")]
    UnknownStrategy { kind: &'static str, name: String },

    #[error("config: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Short stable tag for the innermost error.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::Io { .. } => "io",
            Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => "parse",
            Error::UnknownLabel { .. } | Error::InvalidTask(_) | Error::EmptyStopwords(_) => "data",
            Error::UnknownSurface(_) | Error::TokenOutOfRange { .. } | Error::Vocab(_) => "tokenizer",
            Error::Sampling { .. } | Error::Template(_) | Error::UnknownTemplateSet(_) => "prompt",
            Error::MissingTensor(_) | Error::ShapeMismatch { .. } | Error::TruncatedBlob { .. } => "weights",
            Error::ModelConfig(_) | Error::InvalidPlan(_) | Error::EmptyVerbalizer(_) => "model",
            Error::LengthMismatch { .. } | Error::DatasetMismatch(_) | Error::TooFewSamples(_) => "stats",
            Error::Ablation(_) => "ablation",
            Error::UnknownStrategy { .. } | Error::Config(_) => "config",
            Error::Context { .. } => unreachable!("root skips context"),
        }
    }

    /// Innermost error, skipping any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait ResultExt<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| e.context(context()))
    }
}
