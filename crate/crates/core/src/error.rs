use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("agreement undefined: all ratings fall in a single category")]
    UndefinedAgreement,

    #[error("PMI undefined: {0}")]
    UndefinedPmi(String),

    #[error("gradient descent diverged at iteration {iteration} (non-finite loss)")]
    Diverged { iteration: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("rank-deficient design: missing cells {missing:?}")]
    RankDeficient { missing: Vec<(u8, u8)> },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable code for reports and exit handling.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::InvalidInput(_) => "invalid_input",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::UndefinedAgreement => "undefined_agreement",
            Error::UndefinedPmi(_) => "undefined_pmi",
            Error::Diverged { .. } => "diverged",
            Error::DegenerateSample(_) => "degenerate_sample",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// True for errors caused by user input or configuration rather than
    /// an internal fault.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}
