use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("non-manifold mesh: segments shared by more than two facets: {0}")]
    NonManifold(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "visibility tree exceeds memory budget ({estimated} bytes > {budget} bytes); \
         raise the partition count (currently {partitions})"
    )]
    MemoryBudget {
        estimated: u64,
        budget: u64,
        partitions: usize,
    },

    #[error("invalid field input: {0}")]
    Field(String),

    #[error("visibility cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
