use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not stable: largest eigenvalue real part is {margin:e}")]
    Unstable { margin: f64 },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("invalid factor model: {}", format_violations(.0))]
    InvalidModel(Vec<Violation>),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid input data: {0}")]
    Data(String),

    #[error("rank-deficient regressors, collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("criterion is unbounded above along direction {direction:?}")]
    Unbounded { direction: Vec<f64> },

    #[error("non-finite value on path {path} at step {step}")]
    NonFinitePath { path: usize, step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for problems with user-supplied inputs (files, fields, series),
    /// as opposed to numerical failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Data(_)
                | Error::InvalidModel(_)
                | Error::RankDeficient { .. }
                | Error::Csv(_)
                | Error::Json(_)
                | Error::Io(_)
                | Error::Dimension(_)
        )
    }
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
