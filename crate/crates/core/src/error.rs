use std::path::PathBuf;

/// Errors produced by the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid environment space: {0}")]
    InvalidSpace(String),

    #[error("environment ({e1}, {e2}) is outside a {m1}x{m2} space")]
    EnvironmentOutOfRange { e1: usize, e2: usize, m1: usize, m2: usize },

    #[error("clock time {0} h is outside [0, 24)")]
    TimeOutOfRange(f64),

    #[error("parameter dimensions do not match: {0}")]
    DimensionMismatch(String),

    #[error("deployment history is empty")]
    EmptyHistory,

    #[error("non-finite observation {value} at entry {index}")]
    NonFiniteObservation { index: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("k-means needs at least k={k} routes, got {routes}")]
    TooFewRoutes { k: usize, routes: usize },

    #[error("route {0} has no cluster assignment")]
    UnassignedRoute(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
