use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("id out of bounds: {0}")]
    Bounds(String),

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("splits overlap: triple ({0}, {1}, {2}) appears in more than one split")]
    SplitOverlap(u32, u32, u32),

    #[error("graph is already augmented with inverse relations")]
    AlreadyAugmented,

    #[error("graph must be augmented with inverse relations first")]
    NotAugmented,

    #[error("scoring function syntax error at position {position}: {message}")]
    SfSyntax { position: usize, message: String },

    #[error("unknown catalog model `{0}`")]
    UnknownModel(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("could not generate {requested} distinct triples within {attempts} attempts")]
    Infeasible { requested: usize, attempts: usize },

    #[error("no negative tail exists for a graph with {0} entity")]
    NoNegatives(usize),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| Error::Io {
            path: path.into(),
            source,
        })
    }
}
