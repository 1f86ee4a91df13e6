use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("missing required column `{0}` in header")]
    MissingColumn(&'static str),
    #[error("input contains no interactions")]
    Empty,
    #[error("split boundaries must be non-decreasing, got train_end={train_end} > valid_end={valid_end}")]
    DecreasingBoundaries { train_end: i64, valid_end: i64 },
    #[error("n must be at least 1")]
    InvalidCore,
    #[error("{0} must be at least 1")]
    InvalidLength(&'static str),
    #[error("no negative candidates for {mode} mode: id {id} has interacted with {used} of {total} candidates")]
    EmptyPool {
        mode: &'static str,
        id: usize,
        used: usize,
        total: usize,
    },
    #[error("could not draw {k} distinct negatives for id {id} after {attempts} attempts")]
    SamplingExhausted { id: usize, k: usize, attempts: usize },
    #[error("metadata: {0}")]
    Metadata(String),
}

impl DataError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
