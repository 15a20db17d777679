use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported region: latitude {lat} is beyond ±85°")]
    UnsupportedRegion { lat: f64 },

    #[error("ingestion error in {path}{}: {detail}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Ingest {
        path: PathBuf,
        line: Option<u64>,
        detail: String,
    },

    #[error("missing input file: {0}")]
    MissingInput(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{stage} diverged at iteration {iteration}")]
    Diverged {
        stage: &'static str,
        iteration: usize,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status used by the CLI: 1 usage/config, 2 data, 3 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Precondition(_) => 1,
            Error::Diverged { .. } | Error::Numeric(_) => 3,
            Error::Dimension { .. }
            | Error::Domain(_)
            | Error::UnsupportedRegion { .. }
            | Error::Ingest { .. }
            | Error::MissingInput(_)
            | Error::Io { .. }
            | Error::Json(_)
            | Error::Csv(_) => 2,
        }
    }
}
