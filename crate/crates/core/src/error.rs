use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("{path}:{line}: {reason}")]
    Load {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("graph error: {0}")]
    Graph(String),

    #[error("generation client failed after {attempts} attempt(s): {reason}")]
    Transport { attempts: usize, reason: String },

    #[error("fabrication failed for sample {id}: {reason}")]
    Fabrication { id: String, reason: String },

    #[error("non-finite loss at step {step} (samples: {})", sample_ids.join(","))]
    NonFinite { step: usize, sample_ids: Vec<String> },

    #[error("missing file {}", .0.display())]
    MissingPath(PathBuf),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    /// Process exit code: 1 usage/config, 2 data, 3 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Template(_) => 1,
            Error::Data(_)
            | Error::Load { .. }
            | Error::MissingPath(_)
            | Error::Checkpoint(_)
            | Error::Json(_)
            | Error::Dimension { .. } => 2,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            _ => 3,
        }
    }

    /// Short stable tag used on the diagnostic stream.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Template(_) => "template",
            Error::Load { .. } => "load",
            Error::Graph(_) => "graph",
            Error::Transport { .. } => "transport",
            Error::Fabrication { .. } => "fabrication",
            Error::NonFinite { .. } => "non_finite",
            Error::MissingPath(_) => "missing_path",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
