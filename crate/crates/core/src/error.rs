use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("line {line}: expected {expected} fields, found {found}")]
    RowWidth {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("column `{column}`: value `{value}` cannot be mapped to one of the two declared classes")]
    UnmappableValue { column: String, value: String },

    #[error("line {line}: column `{column}` has non-numeric value `{value}`")]
    NotNumeric {
        line: usize,
        column: String,
        value: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("stratum ({stratum}) has {size} row(s); at least 2 are needed to split")]
    StratumTooSmall { stratum: String, size: usize },

    #[error("group `{0}` is empty; no cross-group pairs can exist")]
    EmptyGroup(&'static str),

    #[error("cell ({cell}) is empty; reweighing is undefined")]
    EmptyCell { cell: String },

    #[error("training diverged at epoch {epoch} (non-finite loss); try a smaller learning rate")]
    Diverged { epoch: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("protected group `{0}` is absent from the evaluation set")]
    MissingGroup(&'static str),

    #[error("{rate} is undefined for the {group} group (zero denominator)")]
    ZeroDenominator {
        group: &'static str,
        rate: &'static str,
    },

    #[error("feature matrix contains the protected attribute column `{0}`")]
    ProtectedLeak(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Attaches a pipeline stage name to an error.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
