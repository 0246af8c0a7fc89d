use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("column `{column}` not found in header of {path}")]
    MissingColumn { path: PathBuf, column: String },

    #[error("row {row}: cannot parse `{value}` in column `{column}` as a number")]
    ParseNumber {
        row: usize,
        column: String,
        value: String,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("covariance matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("mixture component {component} collapsed (effective count {effective_count:e})")]
    ComponentCollapse {
        component: usize,
        effective_count: f64,
    },

    #[error("all {restarts} EM restarts collapsed")]
    AllRestartsCollapsed { restarts: usize },

    #[error("no k in {k_min}..={k_max} produced a clustering that could be scored")]
    NoUsableFit { k_min: usize, k_max: usize },

    #[error("requested {k} clusters for {n} samples")]
    TooManyClusters { k: usize, n: usize },

    #[error("index requires at least 2 clusters, got {0}")]
    TooFewClusters(usize),

    #[error("cluster {0} has no members")]
    EmptyCluster(usize),

    #[error("split candidate for cluster {0} is stale or malformed")]
    StaleCandidate(usize),

    #[error("chart payload does not match chart kind {0:?}")]
    PayloadMismatch(crate::charts::ChartKind),

    #[error("palette has no color for cluster {0}")]
    PaletteIncomplete(usize),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the filesystem rather than by the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Csv { .. })
    }

    /// Process exit status: 1 bad data, 2 i/o or usage, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingColumn { .. } | Error::ParseNumber { .. } | Error::Empty(_) => 1,
            Error::NotPositiveDefinite
            | Error::ComponentCollapse { .. }
            | Error::AllRestartsCollapsed { .. }
            | Error::NoUsableFit { .. }
            | Error::EmptyCluster(_) => 3,
            _ => 2,
        }
    }
}
