use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error in record {record}: missing or invalid field `{field}`")]
    Schema { field: String, record: String },

    #[error("integrity error: {message} (records: {})", .ids.join(", "))]
    Integrity { message: String, ids: Vec<String> },

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged at epoch {epoch}: {message}")]
    Divergence { epoch: usize, message: String },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("estimator undefined: {0}")]
    Undefined(String),

    #[error("corpus unavailable: {0}")]
    CorpusMissing(String),

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

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// True for problems with input files rather than with the request.
    pub fn is_data(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Schema { .. }
                | Error::Integrity { .. }
                | Error::Format { .. }
                | Error::CorpusMissing(_)
        )
    }

    /// True for errors caused by the numerics rather than the input data.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Divergence { .. } | Error::Fit(_))
    }
}
