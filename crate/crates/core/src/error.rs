use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}:{line}: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("path structure error: {0}")]
    Structure(String),

    #[error("unknown entity id {0}")]
    UnknownEntity(u32),

    #[error("unknown relation id {0}")]
    UnknownRelation(u32),

    #[error("entity {0} is missing from the {1} table")]
    MissingEntry(String, &'static str),

    #[error("no surface form for {0}")]
    MissingSurfaceForm(String),

    #[error("{0} requires a non-empty input")]
    EmptyInput(&'static str),

    #[error("{metric} needs at least {needed} paths, got {got}")]
    TooFewPaths {
        metric: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("action {0} is not in the current action space")]
    InvalidAction(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("missing artifact for stage `{stage}`: {} ({hint})", path.display())]
    MissingArtifact {
        stage: &'static str,
        path: PathBuf,
        hint: String,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}
