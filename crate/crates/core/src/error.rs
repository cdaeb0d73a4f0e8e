use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid tree in document {doc_id}, sentence {sent_index}: {details}")]
    InvalidTree {
        doc_id: String,
        sent_index: usize,
        details: String,
    },

    #[error("segmentation error in document {doc_id}, sentence {sent_index}: {message}")]
    Segmentation {
        doc_id: String,
        sent_index: usize,
        message: String,
    },

    #[error("alignment error: {count} unresolvable key(s): {keys}")]
    Alignment { count: usize, keys: String },

    #[error("feature build error: {message}: {keys}")]
    Build { message: String, keys: String },

    #[error("singular design: column(s) {} are collinear with preceding columns", columns.join(", "))]
    SingularDesign { columns: Vec<String> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing input file: {}", .0.display())]
    MissingPath(PathBuf),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::InvalidTree { .. } => "invalid-tree",
            Error::Segmentation { .. } => "segmentation",
            Error::Alignment { .. } => "alignment",
            Error::Build { .. } => "build",
            Error::SingularDesign { .. } => "singular-design",
            Error::InsufficientData(_) => "insufficient-data",
            Error::Contract(_) => "contract",
            Error::Config(_) => "config",
            Error::MissingPath(_) => "missing-path",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
        }
    }

    /// Errors caused by the user's inputs or configuration, as opposed to
    /// failures inside the toolkit. Drives the CLI's exit status.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Contract(_))
    }
}
