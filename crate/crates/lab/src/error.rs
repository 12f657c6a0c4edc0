use std::io;
use std::path::PathBuf;

use scalab_core::classifiers::ClassifierError;
use scalab_core::countermeasure::CountermeasureError;
use scalab_core::dataset::DatasetError;
use scalab_core::evaluation::EvaluationError;
use scalab_core::vm::AsmError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("missing artifact {path} (run `{stage}` first)")]
    MissingArtifact { path: PathBuf, stage: &'static str },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },
    #[error("bad value for `{key}`: {reason}")]
    Value { key: String, reason: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Countermeasure(#[from] CountermeasureError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error(transparent)]
    Asm(#[from] AsmError),
    #[error("{0}")]
    Pipeline(String),
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        LabError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        LabError::Format { path: path.into(), reason: reason.into() }
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
